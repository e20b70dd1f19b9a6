#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "orthoconv/construct.hpp"
#include "orthoconv/verify.hpp"

namespace orthoconv {

/// One verification-grid configuration.
struct GridCase {
  std::string category;
  ConvSpec spec;
  bool transposed = false;
  Ordering ordering = Ordering::bcop;
};

/// Stable identifier, also the output sort key.
inline std::string case_key(const GridCase& c) {
  const ConvSpec& s = c.spec;
  return c.category + "/ci" + std::to_string(s.c_in) + "_co" + std::to_string(s.c_out) + "_k" + std::to_string(s.k_h) +
         "x" + std::to_string(s.k_w) + "_s" + std::to_string(s.stride) + "_g" + std::to_string(s.groups) + "_d" +
         std::to_string(s.dilation) + "_" + to_string(c.ordering) + (c.transposed ? "_T" : "");
}

namespace detail {

inline GridCase grid_case(std::string category, std::size_t ci, std::size_t co, std::size_t kh, std::size_t kw,
                          std::size_t s, std::size_t g = 1, std::size_t d = 1, bool transposed = false,
                          Ordering ordering = Ordering::bcop) {
  ConvSpec spec;
  spec.c_in = ci;
  spec.c_out = co;
  spec.k_h = kh;
  spec.k_w = kw;
  spec.stride = s;
  spec.groups = g;
  spec.dilation = d;
  return {std::move(category), spec, transposed, ordering};
}

}  // namespace detail

/// The verification grid: common CNN shapes, strided, even kernels,
/// depthwise with k = s, kernel = stride, grouped, dilated, transposed and
/// the alternative factor ordering. Channels stay ≤ 16.
inline std::vector<GridCase> selftest_grid() {
  using detail::grid_case;
  std::vector<GridCase> g;
  for (auto [ci, co, k] : std::vector<std::array<std::size_t, 3>>{{4, 4, 3},  {8, 8, 3},  {16, 16, 3}, {4, 8, 3},
                                                                  {8, 4, 3},  {3, 16, 3}, {16, 3, 3},  {2, 2, 3},
                                                                  {4, 4, 5},  {3, 5, 5},  {1, 4, 3},   {6, 1, 3},
                                                                  {16, 8, 1}, {5, 7, 1},  {4, 6, 2}})
    g.push_back(grid_case("common", ci, co, k, k, 1));
  g.push_back(grid_case("common", 4, 4, 3, 5, 1));
  g.push_back(grid_case("common", 6, 4, 5, 2, 1));

  for (auto [ci, co, k, s] : std::vector<std::array<std::size_t, 4>>{
           {4, 8, 3, 2},  {8, 4, 3, 2}, {2, 16, 3, 2}, {4, 16, 3, 2}, {8, 8, 3, 2}, {16, 4, 3, 2},
           {4, 4, 5, 2},  {3, 12, 5, 2}, {1, 8, 3, 2}, {2, 2, 3, 2},  {8, 2, 5, 2}, {3, 10, 3, 2},
           {4, 8, 5, 3},  {2, 18, 3, 3}, {8, 4, 4, 3}, {1, 18, 5, 3}, {6, 16, 3, 2}})
    g.push_back(grid_case("strided", ci, co, k, k, s));
  g.push_back(grid_case("strided", 4, 8, 3, 5, 2));

  for (auto [ci, co, k, s] : std::vector<std::array<std::size_t, 4>>{
           {4, 4, 2, 1}, {4, 8, 2, 1}, {8, 4, 4, 1}, {3, 5, 4, 1}, {4, 8, 4, 2}, {8, 4, 4, 2}, {2, 8, 4, 2}, {2, 3, 2, 1}})
    g.push_back(grid_case("even_kernel", ci, co, k, k, s));

  for (auto [c, k, groups] : std::vector<std::array<std::size_t, 3>>{{4, 2, 4}, {2, 2, 2}, {4, 3, 4}, {4, 1, 4}})
    g.push_back(grid_case("depthwise", c, c, k, k, k, groups));
  g.push_back(grid_case("depthwise", 4, 16, 2, 2, 2, 4));

  for (auto [ci, co, k] : std::vector<std::array<std::size_t, 3>>{
           {3, 12, 2}, {4, 4, 2}, {8, 2, 2}, {2, 18, 3}, {4, 16, 2}, {16, 16, 1}, {5, 3, 1}, {1, 9, 3}, {2, 4, 2}})
    g.push_back(grid_case("kernel_eq_stride", ci, co, k, k, k));

  for (auto [ci, co, k, s, groups] : std::vector<std::array<std::size_t, 5>>{{8, 4, 3, 2, 2},
                                                                            {8, 8, 3, 1, 2},
                                                                            {8, 8, 3, 1, 4},
                                                                            {4, 8, 3, 1, 2},
                                                                            {8, 16, 3, 2, 2},
                                                                            {16, 16, 3, 1, 4},
                                                                            {4, 8, 2, 2, 2},
                                                                            {8, 8, 5, 2, 4},
                                                                            {8, 16, 3, 2, 4}})
    g.push_back(grid_case("grouped", ci, co, k, k, s, groups));

  for (auto [ci, co, k, s, groups] : std::vector<std::array<std::size_t, 5>>{
           {4, 4, 3, 1, 1}, {4, 8, 3, 1, 1}, {8, 4, 3, 1, 1}, {2, 2, 2, 1, 1}, {4, 4, 5, 1, 1}, {8, 8, 3, 1, 2},
           {8, 4, 3, 2, 1}, {8, 2, 2, 2, 1}})
    g.push_back(grid_case("dilated", ci, co, k, k, s, groups, 2));

  for (auto [ci, co, k, s] : std::vector<std::array<std::size_t, 4>>{
           {4, 8, 3, 2}, {2, 8, 2, 2}, {8, 4, 3, 1}, {3, 12, 3, 2}, {4, 16, 3, 2}, {8, 4, 3, 2}})
    g.push_back(grid_case("transposed", ci, co, k, k, s, 1, 1, true));

  for (auto [ci, co, k, s] : std::vector<std::array<std::size_t, 4>>{{4, 4, 3, 1}, {4, 8, 3, 1}, {8, 4, 5, 1},
                                                                     {4, 8, 3, 2}, {2, 16, 3, 2}})
    g.push_back(grid_case("scfac", ci, co, k, k, s, 1, 1, false, Ordering::scfac));
  return g;
}

struct GridResult {
  GridCase grid_case;
  std::string key;
  BranchTag branch;
  SpectrumReport report;
  std::string error;

  bool pass() const { return error.empty() && report.pass; }
};

/// Builds the AOC kernel for `c` and checks its strided Toeplitz spectrum
/// (or the transposed operator's) on desk-size inputs.
inline GridResult run_grid_case(const GridCase& c, std::uint64_t seed = 0, OrthoOptions ortho = {},
                                ParamInit init = ParamInit::orthogonal, double tolerance = kDefaultTolerance) {
  GridResult r{c, case_key(c), {}, {}, {}};
  try {
    AocConfig cfg;
    cfg.spec = c.spec;
    cfg.seed = seed;
    cfg.ortho = ortho;
    cfg.ordering = c.ordering;
    cfg.init = init;
    const AocKernel k = aoc_kernel(cfg);
    r.branch = k.branch;
    const std::size_t n = desk_size(c.spec.stride);
    const DenseMatrix T = c.transposed ? toeplitz_transpose_from_kernel(k.kernel, c.spec, n, n)
                                       : toeplitz_from_kernel(k.kernel, c.spec, n, n);
    r.report = spectrum_report(T, tolerance);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

/// Worker count: ORTHOKERNEL_THREADS if set and positive, else the
/// hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("ORTHOKERNEL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs every case; results are sorted by key regardless of thread count.
inline std::vector<GridResult> run_grid(const std::vector<GridCase>& cases, std::uint64_t seed = 0,
                                        OrthoOptions ortho = {}, ParamInit init = ParamInit::orthogonal,
                                        double tolerance = kDefaultTolerance, std::size_t threads = worker_count()) {
  std::vector<GridResult> results(cases.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cases.size(); i = next++)
      results[i] = run_grid_case(cases[i], seed, ortho, init, tolerance);
  };
  threads = std::max<std::size_t>(1, std::min(threads, cases.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  std::sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) { return a.key < b.key; });
  return results;
}

}  // namespace orthoconv

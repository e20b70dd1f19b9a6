#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "orthoconv/blockconv.hpp"
#include "orthoconv/construct.hpp"
#include "orthoconv/okt_io.hpp"
#include "orthoconv/selftest.hpp"
#include "orthoconv/verify.hpp"

namespace orthoconv {

/// Process exit codes shared by every command.
enum ExitCode : int { kExitPass = 0, kExitVerifyFail = 1, kExitBadInput = 2, kExitUnsupported = 3 };

using nlohmann::json;

namespace detail {

inline std::size_t positive_field(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    throw ShapeError(std::string("config field \"") + key + "\" must be a positive integer");
  return v.get<std::size_t>();
}

/// Runs `body`, mapping exceptions onto the exit-code contract.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UnsupportedConfiguration& e) {
    err << "unsupported configuration: " << e.what() << "\n";
    return kExitUnsupported;
  } catch (const ShapeError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const FormatError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const json::exception& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitVerifyFail;
  }
}

}  // namespace detail

/// Build configuration as JSON:
/// {c_in, c_out, kernel: [k1, k2] or k, stride, groups, dilation, padding,
///  scheme, iters, beta, seed, ordering, init, internal_width,
///  direct_stride}. Only c_in, c_out and kernel are required.
inline AocConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {"c_in",  "c_out", "kernel",   "stride",   "groups",
                                              "dilation", "padding", "scheme", "iters", "beta",
                                              "seed",  "ordering", "init", "internal_width", "direct_stride"};
  if (!j.is_object()) throw ShapeError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ShapeError("unknown config field \"" + key + "\"");
  for (const char* key : {"c_in", "c_out", "kernel"})
    if (!j.contains(key)) throw ShapeError(std::string("config is missing \"") + key + "\"");

  AocConfig cfg;
  cfg.spec.c_in = detail::positive_field(j, "c_in");
  cfg.spec.c_out = detail::positive_field(j, "c_out");
  const json& k = j.at("kernel");
  if (k.is_array()) {
    if (k.size() != 2) throw ShapeError("\"kernel\" must be [k1, k2]");
    cfg.spec.k_h = detail::positive_field(json{{"k1", k[0]}}, "k1");
    cfg.spec.k_w = detail::positive_field(json{{"k2", k[1]}}, "k2");
  } else {
    cfg.spec.k_h = cfg.spec.k_w = detail::positive_field(j, "kernel");
  }
  if (j.contains("stride")) cfg.spec.stride = detail::positive_field(j, "stride");
  if (j.contains("groups")) cfg.spec.groups = detail::positive_field(j, "groups");
  if (j.contains("dilation")) cfg.spec.dilation = detail::positive_field(j, "dilation");
  if (j.contains("padding")) {
    const auto p = j.at("padding").get<std::string>();
    if (p == "zero")
      cfg.spec.padding = Padding::zero;
    else if (p != "circular")
      throw ShapeError("padding must be \"circular\" or \"zero\"");
  }
  if (j.contains("scheme")) cfg.ortho.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  if (j.contains("iters")) cfg.ortho.iters = static_cast<int>(detail::positive_field(j, "iters"));
  if (j.contains("beta")) {
    if (!j.at("beta").is_number()) throw ShapeError("\"beta\" must be a number");
    cfg.ortho.beta = j.at("beta").get<double>();
  }
  if (j.contains("seed")) {
    const json& seed = j.at("seed");
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<long long>() < 0))
      throw ShapeError("\"seed\" must be a non-negative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("ordering")) cfg.ordering = ordering_from_string(j.at("ordering").get<std::string>());
  if (j.contains("init")) cfg.init = param_init_from_string(j.at("init").get<std::string>());
  if (j.contains("internal_width")) cfg.internal_width = detail::positive_field(j, "internal_width");
  if (j.contains("direct_stride")) cfg.allow_direct_stride = j.at("direct_stride").get<bool>();

  if (cfg.spec.c_in % cfg.spec.groups || cfg.spec.c_out % cfg.spec.groups)
    throw ShapeError("c_in and c_out must be divisible by groups");
  cfg.validate();
  return cfg;
}

inline json config_to_json(const AocConfig& cfg) {
  json j = {{"c_in", cfg.spec.c_in},
            {"c_out", cfg.spec.c_out},
            {"kernel", {cfg.spec.k_h, cfg.spec.k_w}},
            {"stride", cfg.spec.stride},
            {"groups", cfg.spec.groups},
            {"dilation", cfg.spec.dilation},
            {"padding", to_string(cfg.spec.padding)},
            {"scheme", to_string(cfg.ortho.scheme)},
            {"iters", cfg.ortho.iters},
            {"beta", cfg.ortho.beta},
            {"seed", cfg.seed},
            {"ordering", to_string(cfg.ordering)},
            {"init", to_string(cfg.init)},
            {"direct_stride", cfg.allow_direct_stride}};
  if (cfg.internal_width) j["internal_width"] = *cfg.internal_width;
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& kernel_path) {
  return kernel_path.string() + ".meta.json";
}

/// Reads `config_path`, applies `overrides` (flags win), builds the kernel
/// and writes it plus a sidecar recording the branches and effective
/// parameters.
inline int cmd_build(const std::filesystem::path& config_path, const std::filesystem::path& out_path,
                     const json& overrides, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    json j = read_json_file(config_path);
    if (!j.is_object()) throw ShapeError("config must be a JSON object");
    for (const auto& [key, value] : overrides.items()) j[key] = value;
    const AocConfig cfg = config_from_json(j);
    const AocKernel k = aoc_kernel(cfg);
    write_okt(out_path, k.kernel);

    json meta = {{"kernel", out_path.filename().string()},
                 {"branch", k.branch.str()},
                 {"branches", json::array()},
                 {"internal_widths", k.internal_widths},
                 {"config", config_to_json(cfg)}};
    for (Branch b : k.branch.per_group) meta["branches"].push_back(to_string(b));
    std::ofstream side(sidecar_path(out_path), std::ios::binary);
    if (!side) throw FormatError("cannot write " + sidecar_path(out_path).string());
    side << meta.dump(2) << "\n";
    out << "wrote " << out_path.string() << " (branch " << k.branch.str() << ")\n";
    return int{kExitPass};
  });
}

/// Application parameters of a stored kernel. Unset fields come from the
/// sidecar when present, else defaults (stride 1, dilation 1, desk size).
struct ApplyOptions {
  std::optional<std::size_t> stride;
  std::optional<std::size_t> dilation;
  std::optional<std::size_t> height;
  std::optional<std::size_t> width;
  double tolerance = kDefaultTolerance;
  bool transposed = false;
};

namespace detail {

struct LoadedKernel {
  KernelTensor kernel;
  ConvSpec spec;
  std::size_t h = 8, w = 8;
};

inline LoadedKernel load_for_apply(const std::filesystem::path& path, const ApplyOptions& opts) {
  LoadedKernel lk;
  lk.kernel = read_okt(path);
  std::size_t stride = 1, dilation = 1;
  if (std::filesystem::exists(sidecar_path(path))) {
    const json meta = read_json_file(sidecar_path(path));
    if (meta.contains("config")) {
      stride = meta["config"].value("stride", std::size_t{1});
      dilation = meta["config"].value("dilation", std::size_t{1});
    }
  }
  stride = opts.stride.value_or(stride);
  dilation = opts.dilation.value_or(dilation);
  require(stride >= 1 && dilation >= 1, "stride and dilation must be positive");
  lk.spec = spec_for(lk.kernel, stride, dilation);
  lk.h = opts.height.value_or(desk_size(stride));
  lk.w = opts.width.value_or(desk_size(stride));
  require(lk.h % stride == 0 && lk.w % stride == 0, "image size must be divisible by the stride");
  return lk;
}

inline json spec_json(const ConvSpec& s, std::size_t h, std::size_t w, bool transposed) {
  return {{"c_in", s.c_in},         {"c_out", s.c_out},       {"kernel", {s.k_h, s.k_w}},
          {"stride", s.stride},     {"groups", s.groups},     {"dilation", s.dilation},
          {"size", {h, w}},         {"transposed", transposed}};
}

inline DenseMatrix operator_matrix(const LoadedKernel& lk, bool transposed) {
  return transposed ? toeplitz_transpose_from_kernel(lk.kernel, lk.spec, lk.h, lk.w)
                    : toeplitz_from_kernel(lk.kernel, lk.spec, lk.h, lk.w);
}

}  // namespace detail

/// Spectrum check of a stored kernel; prints the JSON report. Exit 0 on
/// pass, 1 on fail.
inline int cmd_verify(const std::filesystem::path& kernel_path, const ApplyOptions& opts, std::ostream& out,
                      std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require(opts.tolerance > 0.0, "tolerance must be positive");
    const auto lk = detail::load_for_apply(kernel_path, opts);
    const SpectrumReport r = spectrum_report(detail::operator_matrix(lk, opts.transposed), opts.tolerance);
    json report = to_json(r);
    report["config"] = detail::spec_json(lk.spec, lk.h, lk.w, opts.transposed);
    out << report.dump(2) << "\n";
    return int{r.pass ? kExitPass : kExitVerifyFail};
  });
}

/// Prints {"config": ..., "singular_values": [descending]}.
inline int cmd_spectrum(const std::filesystem::path& kernel_path, const ApplyOptions& opts, std::ostream& out,
                        std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto lk = detail::load_for_apply(kernel_path, opts);
    json report;
    report["config"] = detail::spec_json(lk.spec, lk.h, lk.w, opts.transposed);
    report["singular_values"] = singular_values(detail::operator_matrix(lk, opts.transposed));
    out << report.dump(2) << "\n";
    return int{kExitPass};
  });
}

/// Runs the verification grid and prints per-category pass counts,
/// followed by every failure. Exit 0 iff all cases pass.
inline int cmd_selftest(std::ostream& out, std::ostream& err, bool verbose = false,
                        std::size_t threads = worker_count()) {
  return detail::guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_grid(selftest_grid(), 0, {}, ParamInit::orthogonal, kDefaultTolerance, threads);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::map<std::string, std::pair<std::size_t, std::size_t>> per_category;
    std::size_t failed = 0;
    for (const auto& r : results) {
      auto& [pass, total] = per_category[r.grid_case.category];
      ++total;
      if (r.pass()) ++pass;
      else ++failed;
    }
    if (verbose)
      for (const auto& r : results)
        out << (r.pass() ? "PASS " : "FAIL ") << r.key << " branch=" << r.branch.str() << " sigma=["
            << r.report.sigma_min << ", " << r.report.sigma_max << "]\n";
    for (const auto& [cat, counts] : per_category)
      out << std::left << std::setw(18) << cat << counts.first << "/" << counts.second << "\n";
    for (const auto& r : results)
      if (!r.pass())
        out << "FAIL " << r.key << ": "
            << (r.error.empty() ? "sigma in [" + std::to_string(r.report.sigma_min) + ", " +
                                      std::to_string(r.report.sigma_max) + "]"
                                : r.error)
            << "\n";
    out << "total " << results.size() - failed << "/" << results.size() << " in " << std::fixed
        << std::setprecision(1) << secs << "s\n";
    out.unsetf(std::ios::floatfield);
    return int{failed == 0 ? kExitPass : kExitVerifyFail};
  });
}

struct BenchResult {
  double naive_ms = 0.0;
  double fast_ms = 0.0;
  double sequential_ms = 0.0;
  double scan_ms = 0.0;
};

namespace detail {

template <typename F>
double median_ms(std::size_t reps, F&& f) {
  std::vector<double> t;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto a = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
  }
  std::sort(t.begin(), t.end());
  return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

}  // namespace detail

/// Median wall times of naive vs fast ⊡ on two C x C x k x k kernels, and of
/// sequential vs scan composition of the BCOP factor chain of a k x k kernel.
inline BenchResult run_bench(std::size_t channels, std::size_t k, std::size_t reps) {
  detail::require(channels >= 2 && k >= 1 && reps >= 1, "bench needs channels >= 2, kernel >= 1, reps >= 1");
  const KernelTensor a = random_kernel(channels, channels, k, k, 1);
  const KernelTensor b = random_kernel(channels, channels, k, k, 2);
  ParamSource src(3);
  const KernelChain chain = bcop_factors(channels, channels, k, k, src);
  BenchResult r;
  volatile double sink = 0.0;
  r.naive_ms = detail::median_ms(reps, [&] { sink = sink + block_conv_naive(b, a).values()[0]; });
  r.fast_ms = detail::median_ms(reps, [&] { sink = sink + block_conv_fast(b, a).values()[0]; });
  r.sequential_ms = detail::median_ms(reps, [&] { sink = sink + compose_sequential(chain).values()[0]; });
  r.scan_ms = detail::median_ms(reps, [&] { sink = sink + scan_compose(chain).values()[0]; });
  return r;
}

inline int cmd_bench(std::size_t channels, std::size_t k, std::size_t reps, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (reps == 0) throw ShapeError("--reps must be at least 1");
    const BenchResult r = run_bench(channels, k, reps);
    out << "channels=" << channels << " kernel=" << k << " reps=" << reps << " (median ms)\n";
    out << std::fixed << std::setprecision(3);
    out << "block_conv  naive " << std::setw(10) << r.naive_ms << "  fast " << std::setw(10) << r.fast_ms << "\n";
    out << "compose     seq   " << std::setw(10) << r.sequential_ms << "  scan " << std::setw(10) << r.scan_ms
        << "\n";
    out.unsetf(std::ios::floatfield);
    return int{kExitPass};
  });
}

}  // namespace orthoconv

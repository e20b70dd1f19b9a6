// orthokernel: build, verify and inspect orthogonal convolution kernels.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "orthoconv/commands.hpp"

namespace {

void add_apply_flags(CLI::App* cmd, orthoconv::ApplyOptions& opts, std::optional<std::size_t>& stride,
                     std::optional<std::size_t>& dilation, std::vector<std::size_t>& size) {
  cmd->add_option("--stride", stride, "stride (default: sidecar value or 1)");
  cmd->add_option("--dilation", dilation, "dilation (default: sidecar value or 1)");
  cmd->add_option("--size", size, "input height and width")->expected(2);
  cmd->add_flag("--transposed", opts.transposed, "analyse the transposed convolution");
}

void finish_apply(orthoconv::ApplyOptions& opts, const std::optional<std::size_t>& stride,
                  const std::optional<std::size_t>& dilation, const std::vector<std::size_t>& size) {
  opts.stride = stride;
  opts.dilation = dilation;
  if (size.size() == 2) {
    opts.height = size[0];
    opts.width = size[1];
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace orthoconv;
  CLI::App app{"Construct and verify orthogonal 2-D convolution kernels"};
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "build a kernel from a JSON config");
  std::string config_path, out_path;
  build->add_option("config", config_path, "JSON build config")->required();
  build->add_option("-o,--out", out_path, "output okt-v1 file")->required();
  std::optional<std::size_t> b_cin, b_cout, b_stride, b_groups, b_dilation, b_iters, b_width;
  std::vector<std::size_t> b_kernel;
  std::optional<std::uint64_t> b_seed;
  std::optional<double> b_beta;
  std::optional<std::string> b_scheme, b_ordering, b_init;
  build->add_option("--c-in", b_cin);
  build->add_option("--c-out", b_cout);
  build->add_option("--kernel", b_kernel, "k or k1 k2")->expected(1, 2);
  build->add_option("--stride", b_stride);
  build->add_option("--groups", b_groups);
  build->add_option("--dilation", b_dilation);
  build->add_option("--scheme", b_scheme, "bjorck|qr_mgs|cayley|exponential|cholesky");
  build->add_option("--iters", b_iters);
  build->add_option("--beta", b_beta);
  build->add_option("--seed", b_seed);
  build->add_option("--ordering", b_ordering, "bcop|scfac");
  build->add_option("--init", b_init, "orthogonal|gaussian");
  build->add_option("--internal-width", b_width);

  // verify / spectrum
  ApplyOptions v_opts, s_opts;
  std::optional<std::size_t> v_stride, v_dilation, s_stride, s_dilation;
  std::vector<std::size_t> v_size, s_size;
  std::string v_path, s_path;
  auto* verify = app.add_subcommand("verify", "check the singular values of a stored kernel");
  verify->add_option("kernel", v_path, "okt-v1 file")->required();
  add_apply_flags(verify, v_opts, v_stride, v_dilation, v_size);
  verify->add_option("--tol", v_opts.tolerance, "tolerance on |sigma - 1|");
  auto* spectrum = app.add_subcommand("spectrum", "print the singular values of a stored kernel");
  spectrum->add_option("kernel", s_path, "okt-v1 file")->required();
  add_apply_flags(spectrum, s_opts, s_stride, s_dilation, s_size);

  // selftest
  auto* selftest = app.add_subcommand("selftest", "run the verification grid");
  bool verbose = false;
  selftest->add_flag("-v,--verbose", verbose, "print every case");

  // bench
  auto* bench = app.add_subcommand("bench", "time naive vs fast block convolution");
  std::size_t channels = 16, kernel = 3, reps = 5;
  bench->add_option("--channels", channels);
  bench->add_option("--kernel", kernel);
  bench->add_option("--reps", reps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitBadInput;
  }

  if (*build) {
    json overrides = json::object();
    auto put = [&](const char* key, const auto& v) {
      if (v) overrides[key] = *v;
    };
    put("c_in", b_cin);
    put("c_out", b_cout);
    put("stride", b_stride);
    put("groups", b_groups);
    put("dilation", b_dilation);
    put("iters", b_iters);
    put("internal_width", b_width);
    put("seed", b_seed);
    put("beta", b_beta);
    put("scheme", b_scheme);
    put("ordering", b_ordering);
    put("init", b_init);
    if (b_kernel.size() == 1) overrides["kernel"] = b_kernel[0];
    if (b_kernel.size() == 2) overrides["kernel"] = b_kernel;
    return cmd_build(config_path, out_path, overrides, std::cout, std::cerr);
  }
  if (*verify) {
    finish_apply(v_opts, v_stride, v_dilation, v_size);
    return cmd_verify(v_path, v_opts, std::cout, std::cerr);
  }
  if (*spectrum) {
    finish_apply(s_opts, s_stride, s_dilation, s_size);
    return cmd_spectrum(s_path, s_opts, std::cout, std::cerr);
  }
  if (*selftest) return cmd_selftest(std::cout, std::cerr, verbose);
  if (*bench) return cmd_bench(channels, kernel, reps, std::cout, std::cerr);
  return kExitBadInput;
}

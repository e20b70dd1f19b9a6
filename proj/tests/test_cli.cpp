#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orthoconv/commands.hpp"

using namespace orthoconv;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("orthokernel_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p;
  }

  int build(const json& cfg, const fs::path& out, const json& overrides = json::object()) {
    out_.str("");
    err_.str("");
    return cmd_build(write_config("cfg.json", cfg), out, overrides, out_, err_);
  }

  static int run(const std::string& args) {
    const int status = std::system((std::string(ORTHOKERNEL_BIN) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, BuildWritesKernelAndSidecar) {
  const fs::path out = dir_ / "k.okt";
  ASSERT_EQ(build({{"c_in", 4}, {"c_out", 8}, {"kernel", {3, 3}}, {"stride", 2}}, out), kExitPass) << err_.str();
  const KernelTensor k = read_okt(out);
  EXPECT_EQ(k.shape(), (KernelTensor::Shape{8, 4, 3, 3}));
  const json meta = read_json_file(sidecar_path(out));
  EXPECT_EQ(meta["branch"], "d:rko_of_bcop");
  EXPECT_EQ(meta["config"]["stride"], 2);
  EXPECT_EQ(meta["config"]["scheme"], "bjorck");
  EXPECT_EQ(meta["config"]["iters"], 12);

  // Round trip through the okt-v1 writer reproduces the file.
  const fs::path again = dir_ / "again.okt";
  write_okt(again, k);
  EXPECT_EQ(slurp(out), slurp(again));
}

TEST_F(CliTest, BuildIsDeterministic) {
  const json cfg = {{"c_in", 6}, {"c_out", 6}, {"kernel", 3}, {"groups", 2}, {"seed", 7}};
  ASSERT_EQ(build(cfg, dir_ / "a.okt"), kExitPass);
  ASSERT_EQ(build(cfg, dir_ / "b.okt"), kExitPass);
  EXPECT_EQ(slurp(dir_ / "a.okt"), slurp(dir_ / "b.okt"));
}

TEST_F(CliTest, FlagsOverrideConfig) {
  const fs::path out = dir_ / "k.okt";
  ASSERT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}}, out, {{"c_out", 8}, {"seed", 3}}), kExitPass);
  EXPECT_EQ(read_okt(out).c_out(), 8u);
  EXPECT_EQ(read_json_file(sidecar_path(out))["config"]["seed"], 3);
}

TEST_F(CliTest, BuildExitCodes) {
  const fs::path out = dir_ / "k.okt";
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 2}, {"stride", 3}}, out), kExitUnsupported);
  EXPECT_NE(err_.str().find("stride exceeds the kernel size"), std::string::npos) << err_.str();
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}, {"groups", 4}}, out), kExitUnsupported);
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}, {"padding", "zero"}}, out), kExitUnsupported);
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}}, out), kExitBadInput);
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}, {"colour", 1}}, out), kExitBadInput);
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 6}, {"kernel", 3}, {"groups", 4}}, out), kExitBadInput);
  EXPECT_EQ(build({{"c_in", 0}, {"c_out", 4}, {"kernel", 3}}, out), kExitBadInput);
  EXPECT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}, {"scheme", "svd"}}, out), kExitBadInput);
  EXPECT_EQ(build({{"c_in", 2}, {"c_out", 32}, {"kernel", 3}, {"stride", 2}, {"internal_width", 9}}, out),
            kExitBadInput);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, ConfigRoundTrip) {
  const AocConfig cfg = config_from_json({{"c_in", 8},
                                          {"c_out", 4},
                                          {"kernel", {3, 5}},
                                          {"stride", 2},
                                          {"groups", 2},
                                          {"scheme", "cayley"},
                                          {"ordering", "scfac"},
                                          {"init", "gaussian"},
                                          {"direct_stride", false}});
  const AocConfig back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(back.spec, cfg.spec);
  EXPECT_EQ(back.ortho.scheme, Scheme::cayley);
  EXPECT_EQ(back.ordering, Ordering::scfac);
  EXPECT_EQ(back.init, ParamInit::gaussian);
  EXPECT_FALSE(back.allow_direct_stride);
}

TEST_F(CliTest, VerifyFreshAndPerturbed) {
  const fs::path out = dir_ / "k.okt";
  ASSERT_EQ(build({{"c_in", 4}, {"c_out", 4}, {"kernel", 3}, {"stride", 2}, {"dilation", 1}}, out), kExitPass);
  std::ostringstream o, e;
  EXPECT_EQ(cmd_verify(out, {}, o, e), kExitPass) << e.str();
  const json report = json::parse(o.str());
  EXPECT_EQ(report["pass"], true);
  EXPECT_EQ(report["config"]["stride"], 2);
  EXPECT_EQ(report["n_rows"], 64);

  KernelTensor k = read_okt(out);
  k(0, 0, 0, 0) += 0.1;
  const fs::path bad = dir_ / "bad.okt";
  write_okt(bad, k);
  fs::copy_file(sidecar_path(out), sidecar_path(bad));
  std::ostringstream o2, e2;
  EXPECT_EQ(cmd_verify(bad, {}, o2, e2), kExitVerifyFail);
  EXPECT_EQ(json::parse(o2.str())["pass"], false);
}

TEST_F(CliTest, VerifyTransposedAndSize) {
  const fs::path out = dir_ / "k.okt";
  ASSERT_EQ(build({{"c_in", 8}, {"c_out", 4}, {"kernel", 3}, {"stride", 2}}, out), kExitPass);
  ApplyOptions opts;
  opts.transposed = true;
  opts.height = 6;
  opts.width = 10;
  std::ostringstream o, e;
  EXPECT_EQ(cmd_verify(out, opts, o, e), kExitPass) << e.str();
  const json report = json::parse(o.str());
  EXPECT_EQ(report["n_rows"], 8 * 60);
  EXPECT_EQ(report["config"]["transposed"], true);
  opts.height = 5;
  EXPECT_EQ(cmd_verify(out, opts, o, e), kExitBadInput);
}

TEST_F(CliTest, CholeskyKernelPassesRelaxedTolerance) {
  const fs::path out = dir_ / "k.okt";
  ASSERT_EQ(build({{"c_in", 8}, {"c_out", 8}, {"kernel", 3}, {"scheme", "cholesky"}}, out), kExitPass) << err_.str();
  ApplyOptions opts;
  opts.tolerance = 5e-2;
  std::ostringstream o, e;
  EXPECT_EQ(cmd_verify(out, opts, o, e), kExitPass);
}

TEST_F(CliTest, SpectrumOutputs) {
  const fs::path id = dir_ / "id.okt";
  write_okt(id, KernelTensor::identity(2));
  std::ostringstream o, e;
  ASSERT_EQ(cmd_spectrum(id, {}, o, e), kExitPass);
  const json sv = json::parse(o.str())["singular_values"];
  ASSERT_EQ(sv.size(), 128u);
  for (const auto& s : sv) EXPECT_NEAR(s.get<double>(), 1.0, 1e-12);

  ParamSource src(0);
  const fs::path rko = dir_ / "rko.okt";
  write_okt(rko, rko_kernel(4, 4, 3, 3, src));
  std::ostringstream o2;
  ASSERT_EQ(cmd_spectrum(rko, {}, o2, e), kExitPass);
  const json rs = json::parse(o2.str())["singular_values"];
  EXPECT_LT(rs.back().get<double>(), 0.99);
  EXPECT_GE(rs.front().get<double>(), rs.back().get<double>());
}

TEST_F(CliTest, MissingKernelFileIsBadInput) {
  std::ostringstream o, e;
  EXPECT_EQ(cmd_verify(dir_ / "nope.okt", {}, o, e), kExitBadInput);
}

TEST_F(CliTest, BenchPrintsBothRows) {
  std::ostringstream o, e;
  ASSERT_EQ(cmd_bench(4, 3, 1, o, e), kExitPass);
  EXPECT_NE(o.str().find("naive"), std::string::npos);
  EXPECT_NE(o.str().find("scan"), std::string::npos);
  EXPECT_EQ(cmd_bench(4, 3, 0, o, e), kExitBadInput);
}

TEST_F(CliTest, BinaryExitCodes) {
  const fs::path ok = write_config("ok.json", {{"c_in", 4}, {"c_out", 4}, {"kernel", 3}});
  const fs::path bad = write_config("bad.json", {{"c_in", 4}, {"c_out", 4}, {"kernel", 2}, {"stride", 3}});
  const fs::path out = dir_ / "k.okt";
  EXPECT_EQ(run("build " + ok.string() + " -o " + out.string()), 0);
  EXPECT_EQ(run("verify " + out.string()), 0);
  EXPECT_EQ(run("verify " + out.string() + " --tol 0"), 2);
  EXPECT_EQ(run("build " + bad.string() + " -o " + out.string()), 3);
  EXPECT_EQ(run("build " + ok.string() + " -o " + out.string() + " --kernel 3 --stride 4"), 3);
  EXPECT_EQ(run("bench --reps 0"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("spectrum " + out.string() + " --stride 3 --size 8 8"), 2);
}

// End-to-end checks of the command-line binary: exit codes, printed
// contracts, and artifact round trips. THAT_CLI_PATH is injected by CMake.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include "doctest.h"
#include "that/hypercube.hpp"
#include "that/wald.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("that_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CliResult run_cli(const std::string& args, const fs::path& workdir,
                  const std::string& env_prefix = "") {
  const fs::path log = workdir / "cli_out.txt";
  const std::string cmd = "cd " + workdir.string() + " && " + env_prefix + " " + THAT_CLI_PATH +
                          " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult res;
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream f(log);
  std::ostringstream ss;
  ss << f.rdbuf();
  res.out = ss.str();
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Small-everything model flags shared by the train/eval/infer cases.
const std::string kTinyFlags =
    "--set bands=8 --set channels=16 --set blocks=1 --set heads=2 --set window=4 "
    "--set scale=2 --set crop=16 --set epochs=2 --set batch=1 --set eval_every=1";

}  // namespace

TEST_CASE("cli: params prints both counts in M/G units") {
  const auto dir = fresh_dir("params");
  const auto res = run_cli("params --set channels=16 --set heads=2 --set crop=32", dir);
  CHECK(res.code == 0);
  CHECK(std::regex_search(res.out,
                          std::regex(R"(params=[0-9.e+-]+ M flops=[0-9.e+-]+ G)")));
}

TEST_CASE("cli: config problems exit 2 and are listed together") {
  const auto dir = fresh_dir("badcfg");
  const auto res = run_cli("params --set channles=16 --set use_ptsa=maybe", dir);
  CHECK(res.code == 2);
  CHECK(res.out.find("channles") != std::string::npos);
  CHECK(res.out.find("use_ptsa") != std::string::npos);
}

TEST_CASE("cli: a missing input file exits 3 and names the path") {
  const auto dir = fresh_dir("missing");
  const auto res = run_cli("degrade --set input_cube=/tmp/that_does_not_exist.hsc", dir);
  CHECK(res.code == 3);
  CHECK(res.out.find("/tmp/that_does_not_exist.hsc") != std::string::npos);
}

TEST_CASE("cli: gradcheck reports every op exactly once and exits 0") {
  const auto dir = fresh_dir("gradcheck");
  const auto res = run_cli("gradcheck", dir);
  CHECK(res.code == 0);
  CHECK(res.out.find("gradcheck: PASS") != std::string::npos);

  std::map<std::string, int> seen;
  std::istringstream is(res.out);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string verdict, op;
    ls >> verdict >> op;
    if (verdict == "PASS" || verdict == "FAIL") ++seen[op];
  }
  for (const char* op : {"conv2d", "softmax", "layer_norm", "bmm", "apply_mask", "silu",
                         "cubic_resize", "model_end_to_end"}) {
    CAPTURE(op);
    CHECK(seen[op] == 1);
  }
  CHECK(seen.size() == 31);  // 30 ops + the end-to-end model line
}

TEST_CASE("cli: corrupted adjoint hook makes gradcheck fail naming the op") {
  const auto dir = fresh_dir("corrupt");
  const auto res = run_cli("gradcheck --corrupt conv2d", dir);
  CHECK(res.code == 4);
  CHECK(res.out.find("FAIL  conv2d") != std::string::npos);
  CHECK(res.out.find("gradcheck: FAIL") != std::string::npos);
}

TEST_CASE("cli: degrade writes the (Y, X, GT) triplet with contracted shapes") {
  const auto dir = fresh_dir("degrade");
  that::save_cube((dir / "scene.hsc").string(), that::make_synthetic_scene(5, 48, 48, 8));
  const auto res = run_cli(
      "degrade --set input_cube=scene.hsc --set scale=2 --set crop=32 --out deg", dir);
  CHECK(res.code == 0);
  CHECK(res.out.find("Y ") != std::string::npos);

  const auto y = that::load_cube((dir / "deg/Y.hsc").string());
  const auto x = that::load_cube((dir / "deg/X.hsc").string());
  const auto gt = that::load_cube((dir / "deg/GT.hsc").string());
  CHECK(y.h == 16);
  CHECK(y.w == 16);
  CHECK(y.s == 8);
  CHECK(x.h == 32);
  CHECK(x.s == 1);
  CHECK(gt.h == 32);
  CHECK(gt.s == 8);
  CHECK(gt.wavelengths_nm.size() == 8);
  CHECK(fs::exists(dir / "deg/X.pgm"));
}

TEST_CASE("cli: train, eval, and infer round trip on a synthetic scene") {
  const auto dir = fresh_dir("roundtrip");
  const auto train = run_cli("train " + kTinyFlags + " --seed 3 --out run", dir);
  CHECK(train.code == 0);
  CHECK(fs::exists(dir / "run/best.ckpt"));
  CHECK(fs::exists(dir / "run/final.ckpt"));
  const std::string log = slurp(dir / "run/log.csv");
  CHECK(log.rfind("epoch,lr,loss,psnr,ssim,sam,ergas,scc", 0) == 0);

  const auto eval = run_cli(
      "eval " + kTinyFlags + " --set checkpoint=run/best.ckpt --seed 3 --out evaldir", dir);
  CHECK(eval.code == 0);
  CHECK(eval.out.find("psnr=") != std::string::npos);
  const std::string csv = slurp(dir / "evaldir/metrics.csv");
  CHECK(csv.rfind("dataset,scale,psnr,ssim,sam,ergas,scc", 0) == 0);
  CHECK(slurp(dir / "evaldir/band_psnr.csv").rfind("band,wavelength_nm,psnr_db", 0) == 0);

  // Without the model flags on the command line the checkpoint must still
  // dictate the degradation (scale 2, not the default), bit for bit.
  const auto bare = run_cli(
      "eval --set checkpoint=run/best.ckpt --set crop=16 --seed 3 --out evaldir2", dir);
  CHECK(bare.code == 0);
  CHECK(slurp(dir / "evaldir2/metrics.csv") == csv);

  that::save_cube((dir / "scene.hsc").string(), that::make_synthetic_scene(3, 16, 16, 8));
  const auto deg =
      run_cli("degrade --set input_cube=scene.hsc --set scale=2 --set crop=16 --out deg", dir);
  REQUIRE(deg.code == 0);
  const auto infer = run_cli(
      "infer --set checkpoint=run/best.ckpt --set input_y=deg/Y.hsc --set input_x=deg/X.hsc"
      " --out inf",
      dir);
  CHECK(infer.code == 0);
  const auto fused = that::load_cube((dir / "inf/fused.hsc").string());
  CHECK(fused.h == 16);
  CHECK(fused.w == 16);
  CHECK(fused.s == 8);
  CHECK(fs::exists(dir / "inf/fused_b0.pgm"));
  CHECK(fs::exists(dir / "inf/fused_b4.pgm"));
  CHECK(fs::exists(dir / "inf/fused_b7.pgm"));

  // A multi-band image where the pan should be is a data error.
  const auto bad = run_cli(
      "infer --set checkpoint=run/best.ckpt --set input_y=deg/Y.hsc --set input_x=deg/GT.hsc",
      dir);
  CHECK(bad.code == 3);
}

TEST_CASE("cli: the same seed reproduces the training log byte for byte") {
  const auto dir = fresh_dir("determinism");
  const auto a = run_cli("train " + kTinyFlags + " --seed 9 --out a", dir);
  const auto b = run_cli("train " + kTinyFlags + " --seed 9 --out b", dir);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const std::string la = slurp(dir / "a/log.csv"), lb = slurp(dir / "b/log.csv");
  CHECK(la == lb);
  CHECK(!la.empty());
  CHECK(slurp(dir / "a/final.ckpt") == slurp(dir / "b/final.ckpt"));
}

TEST_CASE("cli: THAT_THREADS caps are accepted") {
  const auto dir = fresh_dir("threads");
  const auto res = run_cli("params", dir, "THAT_THREADS=1");
  CHECK(res.code == 0);
}

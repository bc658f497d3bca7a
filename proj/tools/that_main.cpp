// Command-line front end: degrade | train | eval | infer | gradcheck | params.
//
// All file paths come from the config file (or --set overrides); the only
// output-location knob is --out. Exit codes: 0 success, 2 configuration or
// contract violation, 3 data/shape problem, 4 numerical failure.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "that/checkpoint.hpp"
#include "that/config.hpp"
#include "that/cube_tensor.hpp"
#include "that/gradcheck.hpp"
#include "that/metrics.hpp"
#include "that/training.hpp"
#include "that/wald.hpp"

namespace {

using namespace that;

struct CliArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = ".";
  long long seed = -1;  // <0: leave config seed alone
  std::string corrupt_op;
};

RunConfig resolve_config(const CliArgs& args, const std::vector<std::string>& extra = {}) {
  std::vector<std::string> overrides = args.sets;
  if (args.seed >= 0) overrides.push_back("seed=" + std::to_string(args.seed));
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_run_config(args.config_path, overrides);
}

// A loaded checkpoint dictates the model; feeding its settings back through
// the config layer keeps the derived knobs (blur follows scale) consistent.
std::vector<std::string> model_overrides(const ModelConfig& m) {
  return {"bands=" + std::to_string(m.bands),
          "channels=" + std::to_string(m.channels),
          "blocks=" + std::to_string(m.blocks),
          "heads=" + std::to_string(m.heads),
          "window=" + std::to_string(m.window),
          "scale=" + std::to_string(m.scale),
          std::string("use_pci=") + (m.use_pci ? "true" : "false"),
          std::string("use_ptsa=") + (m.use_ptsa ? "true" : "false"),
          std::string("use_mvfn=") + (m.use_mvfn ? "true" : "false"),
          std::string("upsample_stage=") +
              (m.upsample_stage == UpsampleStage::input ? "input" : "output")};
}

std::string out_path(const CliArgs& args, const std::string& name) {
  std::filesystem::create_directories(args.out_dir);
  return (std::filesystem::path(args.out_dir) / name).string();
}

std::pair<float, float> value_range(const std::vector<float>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

void print_cube_line(const char* tag, const HyperCube& c) {
  const auto [lo, hi] = value_range(c.data);
  std::printf("%s %dx%dx%d range [%.6f, %.6f]\n", tag, c.h, c.w, c.s, lo, hi);
}

HyperCube pan_as_cube(const PanImage& img) {
  HyperCube c(img.h, img.w, 1);
  c.data = img.data;
  return c;
}

PanImage cube_as_pan(const HyperCube& c, const std::string& path) {
  if (c.s != 1)
    throw DataError("'" + path + "': expected a single-band pan cube, got " +
                    std::to_string(c.s) + " bands");
  PanImage img(c.h, c.w);
  img.data = c.data;
  return img;
}

// Loads the cube behind `path`, or synthesizes a scene when the path is
// empty. The synthetic fallback keeps every command runnable out of the box.
HyperCube cube_or_synthetic(const std::string& path, const RunConfig& cfg) {
  if (!path.empty()) return load_cube(path);
  const int side = cfg.wald.crop;
  return make_synthetic_scene(cfg.train.seed, side, side, cfg.model.bands);
}

TrainSample<float> sample_from_cube(const HyperCube& cube, const RunConfig& cfg,
                                    HyperCube* gt_out = nullptr) {
  const HyperCube gt = normalize_crop(cube, cfg.wald.crop);
  const WaldPair pair = wald_degrade(gt, cfg.wald);
  if (gt_out) *gt_out = gt;
  return {cube_to_tensor<float>(pair.y), pan_to_tensor<float>(pair.x), cube_to_tensor<float>(gt)};
}

void print_report(const MetricsReport& r) {
  std::printf("psnr=%.4f dB  ssim=%.4f  sam=%.4f deg  ergas=%.4f  scc=%.4f\n", r.psnr_db, r.ssim,
              r.sam_deg, r.ergas, r.scc);
}

int cmd_degrade(const CliArgs& args) {
  const RunConfig cfg = resolve_config(args);
  if (cfg.input_cube.empty())
    throw ConfigError("degrade: set input_cube=PATH (or leave it to the synthetic scene via train)");
  const HyperCube hr = load_cube(cfg.input_cube);
  const HyperCube gt = normalize_crop(hr, cfg.wald.crop);
  const WaldPair pair = wald_degrade(gt, cfg.wald);

  save_cube(out_path(args, "Y.hsc"), pair.y);
  save_cube(out_path(args, "X.hsc"), pan_as_cube(pair.x));
  save_cube(out_path(args, "GT.hsc"), gt);
  save_pan_pgm(out_path(args, "X.pgm"), pair.x);

  std::printf("wrote %s/{Y,X,GT}.hsc (scale %d, blur %d taps sigma %.2f)\n", args.out_dir.c_str(),
              cfg.wald.scale, cfg.wald.blur_kernel, cfg.wald.blur_sigma);
  print_cube_line("Y ", pair.y);
  print_cube_line("X ", pan_as_cube(pair.x));
  print_cube_line("GT", gt);
  return 0;
}

int cmd_train(const CliArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const HyperCube train_src = cube_or_synthetic(cfg.train_cube, cfg);
  std::vector<TrainSample<float>> train_set{sample_from_cube(train_src, cfg)};
  std::vector<TrainSample<float>> eval_set;
  if (!cfg.eval_cube.empty()) {
    const HyperCube eval_src = load_cube(cfg.eval_cube);
    eval_set.push_back(sample_from_cube(eval_src, cfg));
  } else {
    eval_set = train_set;  // single-cube runs report on the training crop
  }

  auto model = ThatModel<float>::init(cfg.model, cfg.train.seed);
  std::printf("training %s: %d epochs, batch %d, lr0 %.3g\n", cfg.dataset.c_str(),
              cfg.train.epochs, cfg.train.batch, cfg.train.lr0);
  const TrainResult res = train_loop(model, train_set, eval_set, cfg.train, args.out_dir);
  for (const auto& row : res.log) {
    if (row.evaluated)
      std::printf("epoch %d  lr %.3g  loss %.6f  psnr %.4f\n", row.epoch, row.lr, row.loss,
                  row.metrics.psnr_db);
  }
  std::printf("final loss %.6f; best psnr %.4f dB at epoch %d\n", res.log.back().loss,
              res.best_psnr, res.best_epoch);
  std::printf("wrote %s/{final.ckpt,best.ckpt,log.csv}\n", args.out_dir.c_str());
  return 0;
}

int cmd_eval(const CliArgs& args) {
  RunConfig cfg = resolve_config(args);
  if (cfg.checkpoint.empty()) throw ConfigError("eval: set checkpoint=PATH");
  auto model = load_checkpoint<float>(cfg.checkpoint);
  cfg = resolve_config(args, model_overrides(model.cfg));  // degradation must match the model

  const HyperCube src = cube_or_synthetic(cfg.eval_cube, cfg);
  HyperCube gt;
  const TrainSample<float> sample = sample_from_cube(src, cfg, &gt);
  HyperCube pred = predict_cube(model, sample.y, sample.x);
  pred.wavelengths_nm = gt.wavelengths_nm;

  const MetricsReport rep = evaluate_metrics(pred, gt, cfg.model.scale);
  print_report(rep);

  const std::string csv = out_path(args, "metrics.csv");
  {
    std::ofstream f(csv);
    f << metrics_csv_header() << "\n" << metrics_csv_line(cfg.dataset, cfg.model.scale, rep) << "\n";
  }
  const std::string band_csv = out_path(args, "band_psnr.csv");
  {
    std::ofstream f(band_csv);
    f << band_psnr_csv(rep, gt.wavelengths_nm);
  }
  std::printf("wrote %s and %s\n", csv.c_str(), band_csv.c_str());
  return 0;
}

int cmd_infer(const CliArgs& args) {
  const RunConfig cfg = resolve_config(args);
  if (cfg.checkpoint.empty()) throw ConfigError("infer: set checkpoint=PATH");
  if (cfg.input_y.empty() || cfg.input_x.empty())
    throw ConfigError("infer: set input_y=PATH and input_x=PATH");
  auto model = load_checkpoint<float>(cfg.checkpoint);

  const HyperCube y = load_cube(cfg.input_y);
  const PanImage x = cube_as_pan(load_cube(cfg.input_x), cfg.input_x);
  HyperCube fused = predict_cube(model, cube_to_tensor<float>(y), pan_to_tensor<float>(x));
  fused.wavelengths_nm = y.wavelengths_nm;

  save_cube(out_path(args, "fused.hsc"), fused);
  const int mid = fused.s / 2;
  save_band_pgm(out_path(args, "fused_b" + std::to_string(0) + ".pgm"), fused, 0);
  save_band_pgm(out_path(args, "fused_b" + std::to_string(mid) + ".pgm"), fused, mid);
  save_band_pgm(out_path(args, "fused_b" + std::to_string(fused.s - 1) + ".pgm"), fused,
                fused.s - 1);
  print_cube_line("fused", fused);
  std::printf("wrote %s/fused.hsc and band previews\n", args.out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const CliArgs& args) {
  if (!args.corrupt_op.empty()) set_adjoint_corruption(args.corrupt_op);
  const std::uint64_t seed = args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : 0;

  bool ok = true;
  const auto reports = run_op_gradchecks(seed);
  for (const auto& r : reports) {
    std::printf("%s\n", r.to_line().c_str());
    ok = ok && r.pass;
  }
  const FdReport model_rep = run_model_gradcheck(seed);
  std::printf("%s\n", model_rep.to_line().c_str());
  ok = ok && model_rep.pass;

  clear_adjoint_corruption();
  std::printf("gradcheck: %s (%zu ops + model)\n", ok ? "PASS" : "FAIL", reports.size());
  return ok ? 0 : 4;
}

int cmd_params(const CliArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const int side = cfg.wald.crop;
  const ParamFlops pf = count_params_flops(cfg.model, side, side);
  std::printf(
      "bands=%d channels=%d blocks=%d heads=%d window=%d scale=%d output=%dx%d\n", cfg.model.bands,
      cfg.model.channels, cfg.model.blocks, cfg.model.heads, cfg.model.window, cfg.model.scale,
      side, side);
  std::printf("params=%.4g M flops=%.4g G\n", static_cast<double>(pf.params) / 1e6,
              static_cast<double>(pf.flops) / 1e9);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("THAT_THREADS")) {
    const int n = std::atoi(threads);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
  }

  CLI::App app{"hyperspectral pansharpening toolkit"};
  app.require_subcommand(1);

  CliArgs args;
  std::string cmd;
  for (const auto& [name, help] :
       std::vector<std::pair<std::string, std::string>>{
           {"degrade", "split a cube into (Y, X, GT) by blur + decimation"},
           {"train", "fit a model on a degraded cube (synthetic scene if none given)"},
           {"eval", "run a checkpoint against ground truth and report metrics"},
           {"infer", "fuse a cube and pan image with a checkpoint"},
           {"gradcheck", "finite-difference the whole op set and a tiny model"},
           {"params", "report parameter and flop counts"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config_path, "key=value config file");
    sub->add_option("--set", args.sets, "override, e.g. --set channels=32")->take_all();
    sub->add_option("--seed", args.seed, "seed override");
    sub->add_option("--out", args.out_dir, "output directory");
    if (name == "gradcheck")
      sub->add_option("--corrupt", args.corrupt_op, "test hook: corrupt one op's adjoint");
    sub->callback([&cmd, name] { cmd = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd == "degrade") return cmd_degrade(args);
    if (cmd == "train") return cmd_train(args);
    if (cmd == "eval") return cmd_eval(args);
    if (cmd == "infer") return cmd_infer(args);
    if (cmd == "gradcheck") return cmd_gradcheck(args);
    if (cmd == "params") return cmd_params(args);
    std::fprintf(stderr, "error: no command\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

#pragma once

// L1 supervision, bias-corrected Adam, step-decay schedule, and the training
// loop with CSV logging and checkpointing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "that/checkpoint.hpp"
#include "that/metrics.hpp"
#include "that/model.hpp"

namespace that {

struct TrainConfig {
  double lr0 = 5e-4;
  int decay_every = 20;
  double decay_factor = 0.5;
  int epochs = 50;
  int batch = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int eval_every = 5;

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be positive");
    if (!(decay_factor > 0.0) || decay_factor > 1.0)
      throw ConfigError("train: decay_factor must be in (0, 1]");
    if (decay_every < 1) throw ConfigError("train: decay_every must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("train: betas must lie in [0, 1)");
  }
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractError("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  return mean_all(abs(sub(pred, target)));
}

inline double l1_loss(const HyperCube& pred, const HyperCube& ref) {
  if (pred.h != ref.h || pred.w != ref.w || pred.s != ref.s)
    throw ShapeError("l1_loss: cube shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    acc += std::abs(static_cast<double>(pred.data[i]) - ref.data[i]);
  return acc / ref.data.size();
}

template <class T>
class Adam {
 public:
  Adam(const std::vector<std::pair<std::string, Tensor<T>>>& params, const TrainConfig& cfg)
      : cfg_(cfg) {
    slots_.reserve(params.size());
    for (const auto& [name, t] : params)
      slots_.push_back({std::vector<double>(t.numel(), 0.0),
                        std::vector<double>(t.numel(), 0.0)});
  }

  long long steps() const { return step_; }

  void step(std::vector<std::pair<std::string, Tensor<T>>>& params, double lr) {
    if (params.size() != slots_.size())
      throw ContractError("adam: parameter list changed size");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i].second.data();
      auto& grad = params[i].second.grad();
      auto& [m, v] = slots_[i];
      for (std::size_t j = 0; j < value.size(); ++j) {
        const double g = static_cast<double>(grad[j]) + cfg_.weight_decay * value[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        value[j] -= static_cast<T>(lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps));
      }
    }
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  TrainConfig cfg_;
  std::vector<Slot> slots_;
  long long step_ = 0;
};

template <class T>
struct TrainSample {
  Tensor<T> y;   // [1, S, h, w]
  Tensor<T> x;   // [1, 1, r*h, r*w]
  Tensor<T> gt;  // [1, S, r*h, r*w]
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  bool evaluated = false;
  MetricsReport metrics;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_psnr = 0.0;
};

template <class T>
HyperCube predict_cube(const ThatModel<T>& model, const Tensor<T>& y, const Tensor<T>& x,
                       bool clamp01 = true) {
  auto out = that_forward(y, x, model);
  auto cube = tensor_to_cube(out);
  if (clamp01)
    for (auto& v : cube.data) v = std::clamp(v, 0.0f, 1.0f);
  return cube;
}

template <class T>
MetricsReport evaluate_model(const ThatModel<T>& model,
                             const std::vector<TrainSample<T>>& eval_set, int scale) {
  if (eval_set.empty()) throw ContractError("evaluate_model: empty evaluation set");
  MetricsReport sum;
  for (const auto& s : eval_set) {
    auto pred = predict_cube(model, s.y, s.x);
    auto ref = tensor_to_cube(s.gt);
    auto r = evaluate_metrics(pred, ref, scale);
    sum.psnr_db += r.psnr_db;
    sum.ssim += r.ssim;
    sum.sam_deg += r.sam_deg;
    sum.ergas += r.ergas;
    sum.scc += r.scc;
    if (sum.psnr_per_band.empty()) sum.psnr_per_band.assign(r.psnr_per_band.size(), 0.0);
    for (std::size_t b = 0; b < r.psnr_per_band.size(); ++b)
      sum.psnr_per_band[b] += r.psnr_per_band[b];
  }
  const double n = static_cast<double>(eval_set.size());
  sum.psnr_db /= n;
  sum.ssim /= n;
  sum.sam_deg /= n;
  sum.ergas /= n;
  sum.scc /= n;
  for (auto& v : sum.psnr_per_band) v /= n;
  return sum;
}

inline std::string training_log_csv(const std::vector<EpochLog>& rows) {
  std::string out = "epoch,lr,loss,psnr,ssim,sam,ergas,scc\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.evaluated)
      std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.lr,
                    r.loss, r.metrics.psnr_db, r.metrics.ssim, r.metrics.sam_deg,
                    r.metrics.ergas, r.metrics.scc);
    else
      std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,,,,,\n", r.epoch, r.lr, r.loss);
    out += buf;
  }
  return out;
}

namespace detail {

// Walks the recorded graph in topological order and names the op of the
// first node holding a non-finite value.
template <class T>
[[noreturn]] void report_non_finite(const Tensor<T>& loss, int epoch) {
  auto g = Graph<T>::record(loss);
  for (auto* n : g.order)
    for (T v : n->val)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("training: non-finite values first appear in op '" +
                           std::string(n->op) + "' at epoch " + std::to_string(epoch));
  throw NumericError("training: non-finite loss at epoch " + std::to_string(epoch));
}

}  // namespace detail

// Seeded mini-batch loop. When `out_dir` is non-empty, writes log.csv plus
// best.ckpt / final.ckpt (best by evaluation PSNR).
template <class T>
TrainResult train_loop(ThatModel<T>& model, const std::vector<TrainSample<T>>& train_set,
                       const std::vector<TrainSample<T>>& eval_set, const TrainConfig& cfg,
                       const std::string& out_dir = "") {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train_loop: empty training set");
  auto params = model.named_params();
  Adam<T> opt(params, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  TrainResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      for (auto& [name, t] : params) t.zero_grad();
      Tensor<T> total;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = train_set[order[i]];
        auto li = l1_loss(that_forward(s.y, s.x, model), s.gt);
        total = total.defined() ? add(total, li) : li;
      }
      auto loss = scalar_mul(total, T(1) / static_cast<T>(stop - start));
      if (!all_finite(loss)) detail::report_non_finite(loss, epoch);
      backward(loss);
      opt.step(params, lr);
      loss_sum += static_cast<double>(loss.item());
      ++batches;
    }

    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss = loss_sum / batches;
    const bool last = epoch + 1 == cfg.epochs;
    if (!eval_set.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      row.metrics = evaluate_model(model, eval_set, model.cfg.scale);
      row.evaluated = true;
      if (row.metrics.psnr_db > res.best_psnr || res.best_epoch < 0) {
        res.best_psnr = row.metrics.psnr_db;
        res.best_epoch = epoch;
        if (!out_dir.empty()) save_checkpoint(out_dir + "/best.ckpt", model);
      }
    }
    res.log.push_back(row);
  }

  if (!out_dir.empty()) {
    save_checkpoint(out_dir + "/final.ckpt", model);
    std::ofstream log(out_dir + "/log.csv", std::ios::trunc);
    log << training_log_csv(res.log);
  }
  return res;
}

}  // namespace that

#pragma once

// Run configuration: one flat "key = value" file (plus command-line
// overrides) covering the model, the training loop, the degradation
// pipeline, and the file paths the commands operate on.
//
// Parsing is two-phase: parse_kv_text splits the file into (key, value)
// pairs and reports every malformed line at once; make_run_config applies
// the pairs against the schema and reports every unknown key / bad value
// at once. Later pairs win, so --set overrides simply append.

#include <string>
#include <utility>
#include <vector>

#include "that/model.hpp"
#include "that/training.hpp"
#include "that/wald.hpp"

namespace that {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  WaldConfig wald;  // scale mirrors model.scale; blur derived unless set

  std::string dataset = "synthetic";
  std::string input_cube;  // degrade: HR cube to split into (Y, X, GT)
  std::string train_cube;  // train: cube degraded into the training pair
  std::string eval_cube;   // train/eval: held-out cube; empty reuses train
  std::string checkpoint;  // eval/infer: model weights
  std::string input_y;     // infer: LR cube
  std::string input_x;     // infer: HR pan image

  void validate() const {
    model.validate();
    train.validate();
    wald.validate();
  }
};

using KvPairs = std::vector<std::pair<std::string, std::string>>;

// Splits text into key/value pairs. Lines are trimmed; "#" starts a
// comment; blank lines are skipped. A non-blank line without "=" is an
// error; all such lines are collected into one ConfigError.
KvPairs parse_kv_text(const std::string& text);

// Applies pairs over the defaults. Unknown keys and unparsable values are
// collected and thrown together. blur_kernel / blur_sigma default from the
// final scale unless the pairs set them explicitly.
RunConfig make_run_config(const KvPairs& pairs);

// Reads path (empty path = defaults only), then applies overrides, each a
// "key=value" string. The result is validated.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// The schema, for help text and tests.
std::vector<std::string> run_config_keys();

}  // namespace that

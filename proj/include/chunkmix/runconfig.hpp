#pragma once

#include <string>

#include "chunkmix/trainer.hpp"

namespace chunkmix::cli {

// everything a training run needs: optimizer/objective settings plus the
// dataset and output locations
struct RunConfig {
  train::TrainConfig train;
  std::string data;        // directory holding train.cmdata / test.cmdata
  std::string out = "out"; // directory for checkpoint and logs
  std::string raw;         // config file text, echoed verbatim into checkpoints
};

// comma list over {mix_cycle, plain_recon, gan, cls}; replaces the defaults
mixing::Toggles parse_toggles(const std::string& list);
// "f64" or "f32"
ad::Precision parse_precision(const std::string& s);

// apply one key/value pair; unknown keys and malformed values are rejected
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// UTF-8 `key = value` lines; blank lines and '#' comments allowed; errors
// carry the file name and line number
RunConfig parse_run_config(const std::string& path);

}  // namespace chunkmix::cli

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "chunkmix/autodiff.hpp"
#include "chunkmix/dataset.hpp"
#include "chunkmix/mixing.hpp"
#include "chunkmix/models.hpp"

namespace chunkmix::train {

struct TrainConfig {
  double lambda_m = 1.0;
  double lambda_g = 1.0;
  double lambda_c = 1.0;
  mixing::Toggles toggles;
  std::int64_t n = 4;
  std::int64_t d = 8;
  std::int64_t epochs = 40;
  std::int64_t batch = 32;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  ad::Precision precision = ad::Precision::f64;
};

struct LogRow {
  std::int64_t step = 0;
  double l_mix = 0.0;   // cycle reconstruction; plain reconstruction for rows without the cycle
  double g_loss = 0.0;
  double d_loss = 0.0;
  double l_cls = 0.0;
  double cls_acc = 0.0;
  std::int64_t wall_ms = 0;
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::vector<LogRow> rows;

  void write_tsv(const std::string& path) const;
};

// one bias-corrected Adam update; t is the 1-based count of updates applied
// to this group including the current one
void adam_step(std::span<double> param, std::span<const double> grad, std::vector<double>& m,
               std::vector<double>& v, std::int64_t t, double lr, double beta1, double beta2,
               double eps);

struct TrainHooks {
  // invoked after every epoch with the current parameters (the final epoch's
  // call delivers the end-of-training state)
  std::function<void(const models::ModelParams&, std::int64_t epoch)> on_epoch;
};

struct TrainResult {
  models::ModelParams params;
  TrainLog log;
  std::int64_t clamp_events = 0;
};

// alternating adversarial training over i.i.d. image pairs with one fresh
// mask per pair per step; aborts with a numeric error on non-finite losses
TrainResult train(const TrainConfig& cfg, const data::ImageView& images,
                  const TrainHooks& hooks = {});

}  // namespace chunkmix::train

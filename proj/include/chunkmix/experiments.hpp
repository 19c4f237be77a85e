#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chunkmix/dataset.hpp"
#include "chunkmix/eval.hpp"
#include "chunkmix/trainer.hpp"

namespace chunkmix::train {

// one ablation row: a toggle composition with its feature layout
struct MethodSpec {
  std::string name;
  mixing::Toggles toggles;
  std::int64_t n = 4;
  std::int64_t d = 8;
  bool trained = true;  // the Random row evaluates chance-level features instead
};

// the eight method rows, in report order; the plain autoencoder keeps the
// total feature width n*d in a single chunk
std::vector<MethodSpec> ablation_methods(std::int64_t n, std::int64_t d);

// chance-level baseline: features drawn i.i.d. from the seeded stream,
// independent of image content, so every retrieval ranking is random and
// per-factor mAP sits at the class prior
eval::FeatureMatrix random_features(const data::Dataset& ds, std::int64_t n, std::int64_t d,
                                    std::uint64_t seed);

struct AblationRow {
  std::string method;
  std::vector<double> per_factor;  // median over seeds of the best-chunk mAP
  double average = 0.0;            // median over seeds of the per-seed average
};

struct AblationReport {
  std::vector<std::string> factor_names;
  std::vector<AblationRow> rows;

  void write_tsv(const std::string& path) const;
};

// called after every completed run with a one-line summary
using Progress = std::function<void(const std::string&)>;

// trains every method over every seed on the train split and scores
// best-chunk retrieval on the test split; base supplies the shared
// epochs/batch/optimizer/precision settings
AblationReport ablation_suite(const data::Dataset& train_ds, const data::Dataset& test_ds,
                              std::span<const std::uint64_t> seeds, const TrainConfig& base,
                              const Progress& progress = {});

}  // namespace chunkmix::train

namespace chunkmix::eval {

struct ChunkSizeCurve {
  std::vector<std::int64_t> sizes;
  std::vector<double> average_map;  // test-split average best-chunk mAP per size

  void write_tsv(const std::string& path) const;
};

// trains the full objective once per chunk dimension (chunk count fixed by
// base.n) and reports the retrieval quality curve
ChunkSizeCurve chunk_size_ablation(const data::Dataset& train_ds, const data::Dataset& test_ds,
                                   std::span<const std::int64_t> sizes,
                                   const train::TrainConfig& base,
                                   const train::Progress& progress = {});

}  // namespace chunkmix::eval

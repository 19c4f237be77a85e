#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chunkmix/dataset.hpp"
#include "chunkmix/models.hpp"

namespace chunkmix::eval {

// encoded features for a labeled image set, one row per image
struct FeatureMatrix {
  std::int64_t n = 0;  // chunk count
  std::int64_t d = 0;  // chunk dimension
  std::int64_t rows = 0;
  std::vector<double> values;                // rows * (n*d)
  std::vector<std::uint32_t> labels;         // rows * factor_count
  std::vector<std::uint32_t> cardinalities;  // per factor

  std::int64_t dim() const { return n * d; }
  std::int64_t factor_count() const { return static_cast<std::int64_t>(cardinalities.size()); }
  std::span<const double> row(std::int64_t r) const;
  std::span<const double> chunk(std::int64_t r, std::int64_t c) const;
  std::uint32_t label(std::int64_t r, std::int64_t f) const;
};

// run the encoder over every image in inference mode (batched; the grouping
// does not affect the values)
FeatureMatrix extract_features(models::ModelParams& params, const data::Dataset& ds,
                               std::int64_t batch = 64);

// leave-one-out retrieval on one chunk's coordinates; relevance = same label
// on factor_index; ranking by ascending distance with ties broken by item
// index; queries without a single relevant item are excluded from the mean
double retrieval_map(const FeatureMatrix& fm, std::int64_t chunk_index, std::int64_t factor_index);

struct BestChunkTable {
  std::vector<std::vector<double>> map;  // [factor][chunk]
  std::vector<std::int64_t> best_chunk;  // per factor, ties -> lowest index
  std::vector<double> best_map;          // per factor
  double average = 0.0;                  // mean of best_map

  void write_tsv(const std::string& path, std::span<const std::string> factor_names) const;
};
BestChunkTable best_chunk_table(const FeatureMatrix& fm);

// nearest-centroid linear classifier: w is the difference of class means,
// b the hinge-optimal breakpoint, scale the per-coordinate normalization
struct ProbeModel {
  std::vector<double> scale;  // multipliers applied to raw features before w
  std::vector<double> w;
  double b = 0.0;

  // +1 / -1 decision; a score of exactly zero goes positive
  int predict(std::span<const double> f) const;
};

// centroid fit on features taken as-is (scale stays all-ones); labels are
// +1 / -1 and both classes must be present
ProbeModel fit_centroid_probe(std::int64_t dim, std::span<const double> features,
                              std::span<const int> labels);

// full protocol: unit-variance scaling from training statistics, centroid w,
// hinge-optimal b, sign accuracy on the test rows
double linear_probe(std::int64_t dim, std::span<const double> train_features,
                    std::span<const int> train_labels, std::span<const double> test_features,
                    std::span<const int> test_labels, ProbeModel* fitted = nullptr);

// one-vs-rest probe per class of the factor, mean accuracy across classes
double probe_factor_accuracy(const FeatureMatrix& train, const FeatureMatrix& test,
                             std::int64_t factor);

struct ProbeReport {
  std::vector<double> per_factor;
  void write_tsv(const std::string& path, std::span<const std::string> factor_names) const;
};
ProbeReport probe_report(const FeatureMatrix& train, const FeatureMatrix& test);

// 8-bit RGB raster, rows top to bottom, channels interleaved
struct Rgb8Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

// [0,1] -> 0..255, round half up, clamped
std::uint8_t quantize8(double v);

// binary PPM (P6, maxval 255)
void write_ppm(const Rgb8Image& img, const std::string& path);

// attribute-transfer panel: top row shows the column sources, left column the
// row sources, inner cell (i,j) decodes row i's feature with chunk_index
// taken from column j; the top-left corner is black
Rgb8Image transfer_grid(models::ModelParams& params, const data::ImageView& row_images,
                        const data::ImageView& col_images, std::int64_t chunk_index);

// per-chunk usefulness over random image pairs: decoder sensitivity is the
// RMS pixel change when only that chunk is swapped, mask_accuracy the
// classifier's bit recovery rate on mixed decodes
struct ShortcutReport {
  std::vector<double> sensitivity;
  std::vector<double> mask_accuracy;
  std::vector<std::uint8_t> dead;  // sensitivity < 1e-3 and accuracy < 0.55

  std::int64_t dead_count() const;
  void write_tsv(const std::string& path) const;
};
ShortcutReport shortcut_report(models::ModelParams& params, const data::Dataset& ds,
                               std::uint64_t seed = 1, std::int64_t pairs = 128);

}  // namespace chunkmix::eval

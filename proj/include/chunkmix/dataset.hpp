#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chunkmix/common.hpp"

namespace chunkmix::data {

inline constexpr std::int64_t kSide = 16;
inline constexpr std::int64_t kChannels = 3;
inline constexpr std::int64_t kPixels = kChannels * kSide * kSide;

// the procedural factors: shape, foreground hue, horizontal position, size
struct FactorSpec {
  std::vector<std::string> names;
  std::vector<std::uint32_t> cardinalities;

  static FactorSpec defaults();  // {shape:3, fg_hue:4, x_position:3, size:2}
  std::int64_t factor_count() const { return static_cast<std::int64_t>(names.size()); }
  std::int64_t combos() const;
};

using FactorLabels = std::vector<std::uint32_t>;  // one value per factor

// one 3x16x16 image, planar channel-major, values in [0,1]; dy is the
// unlabeled vertical jitter in pixels
std::vector<float> render(const FactorSpec& spec, const FactorLabels& labels, int dy = 0);

// label-free view of the images: the only thing training code may see
struct ImageView {
  std::int64_t count = 0;
  std::span<const float> pixels;  // count * kPixels

  std::span<const float> image(std::int64_t i) const {
    return pixels.subspan(static_cast<size_t>(i * kPixels), static_cast<size_t>(kPixels));
  }
};

struct Dataset {
  std::vector<std::uint32_t> cardinalities;
  std::vector<float> pixels;           // count * kPixels
  std::vector<std::uint32_t> labels;   // count * factor_count

  std::int64_t count() const;
  std::int64_t factor_count() const { return static_cast<std::int64_t>(cardinalities.size()); }
  std::span<const float> image(std::int64_t i) const;
  std::uint32_t label(std::int64_t i, std::int64_t factor) const;
  ImageView images() const { return {count(), std::span<const float>(pixels)}; }
};

struct GenerateResult {
  std::string train_path;
  std::string test_path;
  std::string manifest_path;
  std::int64_t train_count = 0;
  std::int64_t test_count = 0;
};

// renders copies_per_combo jittered variants of every factor combination and
// writes train/test files plus a manifest into out_dir (80/20 stratified by
// combination)
GenerateResult generate(const FactorSpec& spec, const std::string& out_dir, std::uint64_t seed,
                        std::int64_t copies_per_combo = 25);

Dataset load(const std::string& path);

// display names for a cardinality vector: the default factor names when they
// match, positional names otherwise
std::vector<std::string> factor_names_for(const std::vector<std::uint32_t>& cardinalities);

}  // namespace chunkmix::data

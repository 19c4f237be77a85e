#include "chunkmix/dataset.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace chunkmix::data {

namespace {

constexpr char kMagic[] = "CMDATA1\n";
constexpr size_t kMagicLen = 8;

// palette with max pairwise channel distance >= 0.5 so hue stays linearly
// decodable from raw pixels
constexpr std::array<std::array<float, 3>, 4> kHues{{
    {1.0f, 0.0f, 0.0f},
    {0.0f, 1.0f, 0.0f},
    {0.0f, 0.0f, 1.0f},
    {1.0f, 1.0f, 0.0f},
}};

constexpr std::array<int, 3> kOffsets{-4, 0, 4};
constexpr std::array<int, 2> kHalfExtents{3, 5};
constexpr float kBackground = 0.5f;

}  // namespace

FactorSpec FactorSpec::defaults() {
  FactorSpec s;
  s.names = {"shape", "fg_hue", "x_position", "size"};
  s.cardinalities = {3, 4, 3, 2};
  return s;
}

std::int64_t FactorSpec::combos() const {
  std::int64_t c = 1;
  for (std::uint32_t k : cardinalities) c *= k;
  return c;
}

std::vector<float> render(const FactorSpec& spec, const FactorLabels& labels, int dy) {
  if (static_cast<std::int64_t>(labels.size()) != spec.factor_count())
    fail(errc::config, "expected " + std::to_string(spec.factor_count()) + " labels, got " +
                           std::to_string(labels.size()));
  for (size_t f = 0; f < labels.size(); ++f)
    if (labels[f] >= spec.cardinalities[f])
      fail(errc::config, "label " + std::to_string(labels[f]) + " out of range for factor " +
                             spec.names[f]);
  const std::uint32_t shape = labels[0], hue = labels[1], pos = labels[2], size = labels[3];
  const int h = kHalfExtents[size];
  const int cx = 8 + kOffsets[pos];
  const int cy = 8 + dy;
  const auto& rgb = kHues[hue];

  std::vector<float> img(static_cast<size_t>(kPixels), kBackground);
  auto paint = [&](int r, int c) {
    if (r < 0 || r >= kSide || c < 0 || c >= kSide) return;
    for (int ch = 0; ch < 3; ++ch)
      img[static_cast<size_t>(ch * kSide * kSide + r * kSide + c)] = rgb[static_cast<size_t>(ch)];
  };

  switch (shape) {
    case 0: {  // disk of radius h - 0.5 about the (continuous) cell center
      const double r2 = (h - 0.5) * (h - 0.5);
      const double ccy = cy - 0.5, ccx = cx - 0.5;
      for (int r = cy - h; r < cy + h; ++r)
        for (int c = cx - h; c < cx + h; ++c)
          if ((r - ccy) * (r - ccy) + (c - ccx) * (c - ccx) <= r2) paint(r, c);
      break;
    }
    case 1: {  // square with half-extent h
      for (int r = cy - h; r < cy + h; ++r)
        for (int c = cx - h; c < cx + h; ++c) paint(r, c);
      break;
    }
    default: {  // upward triangle, apex 2px wide, base matching the square
      for (int t = 0; t < 2 * h; ++t) {
        const int halfw = t / 2;
        for (int c = cx - 1 - halfw; c <= cx + halfw; ++c) paint(cy - h + t, c);
      }
      break;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// container accessors
// ---------------------------------------------------------------------------

std::int64_t Dataset::count() const {
  return factor_count() == 0 ? 0
                             : static_cast<std::int64_t>(labels.size()) / factor_count();
}

std::span<const float> Dataset::image(std::int64_t i) const {
  if (i < 0 || i >= count()) fail(errc::shape, "image index " + std::to_string(i) + " out of range");
  return {pixels.data() + i * kPixels, static_cast<size_t>(kPixels)};
}

std::uint32_t Dataset::label(std::int64_t i, std::int64_t factor) const {
  if (i < 0 || i >= count() || factor < 0 || factor >= factor_count())
    fail(errc::shape, "label index (" + std::to_string(i) + "," + std::to_string(factor) +
                          ") out of range");
  return labels[static_cast<size_t>(i * factor_count() + factor)];
}

// ---------------------------------------------------------------------------
// file io
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                 static_cast<unsigned char>(v >> 16),
                                 static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) fail(errc::io, path + " truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

float get_f32(std::istream& in, const std::string& path) {
  const std::uint32_t u = get_u32(in, path);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void write_split(const std::string& path, const FactorSpec& spec,
                 const std::vector<float>& pixels, const std::vector<std::uint32_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  out.write(kMagic, kMagicLen);
  const std::int64_t count = static_cast<std::int64_t>(labels.size()) / spec.factor_count();
  put_u32(out, static_cast<std::uint32_t>(count));
  put_u32(out, static_cast<std::uint32_t>(spec.factor_count()));
  for (std::uint32_t card : spec.cardinalities) put_u32(out, card);
  for (std::int64_t i = 0; i < count; ++i) {
    for (std::int64_t p = 0; p < kPixels; ++p)
      put_f32(out, pixels[static_cast<size_t>(i * kPixels + p)]);
    for (std::int64_t f = 0; f < spec.factor_count(); ++f)
      put_u32(out, labels[static_cast<size_t>(i * spec.factor_count() + f)]);
  }
  if (!out) fail(errc::io, "write failed for " + path);
}

}  // namespace

GenerateResult generate(const FactorSpec& spec, const std::string& out_dir, std::uint64_t seed,
                        std::int64_t copies_per_combo) {
  if (copies_per_combo < 1) fail(errc::config, "need at least one copy per combination");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(errc::io, "cannot create " + out_dir + ": " + ec.message());

  const std::int64_t factors = spec.factor_count();
  // last fifth of each combination's copies goes to the test split
  const std::int64_t test_per_combo =
      copies_per_combo >= 2 ? std::max<std::int64_t>(1, copies_per_combo / 5) : 0;
  const std::int64_t train_per_combo = copies_per_combo - test_per_combo;

  Rng rng(mix_seed(0xda7a5e7ull, seed));
  std::vector<float> train_px, test_px;
  std::vector<std::uint32_t> train_lb, test_lb;

  FactorLabels labels(static_cast<size_t>(factors), 0);
  for (std::int64_t combo = 0; combo < spec.combos(); ++combo) {
    std::int64_t rest = combo;  // lexicographic unrank, last factor fastest
    for (std::int64_t f = factors - 1; f >= 0; --f) {
      labels[static_cast<size_t>(f)] = static_cast<std::uint32_t>(
          rest % spec.cardinalities[static_cast<size_t>(f)]);
      rest /= spec.cardinalities[static_cast<size_t>(f)];
    }
    for (std::int64_t k = 0; k < copies_per_combo; ++k) {
      const int dy = static_cast<int>(rng.below(3)) - 1;
      const std::vector<float> img = render(spec, labels, dy);
      const bool to_test = k >= train_per_combo;
      auto& px = to_test ? test_px : train_px;
      auto& lb = to_test ? test_lb : train_lb;
      px.insert(px.end(), img.begin(), img.end());
      lb.insert(lb.end(), labels.begin(), labels.end());
    }
  }

  GenerateResult res;
  res.train_count = static_cast<std::int64_t>(train_lb.size()) / factors;
  res.test_count = static_cast<std::int64_t>(test_lb.size()) / factors;
  const std::filesystem::path dir(out_dir);
  res.train_path = (dir / "train.cmdata").string();
  res.test_path = (dir / "test.cmdata").string();
  res.manifest_path = (dir / "manifest.txt").string();
  write_split(res.train_path, spec, train_px, train_lb);
  write_split(res.test_path, spec, test_px, test_lb);

  std::ofstream man(res.manifest_path, std::ios::trunc);
  if (!man) fail(errc::io, "cannot open " + res.manifest_path + " for writing");
  man << "seed=" << seed << "\n"
      << "copies_per_combo=" << copies_per_combo << "\n"
      << "factors=";
  for (size_t f = 0; f < spec.names.size(); ++f) man << (f ? "," : "") << spec.names[f];
  man << "\ncardinalities=";
  for (size_t f = 0; f < spec.cardinalities.size(); ++f)
    man << (f ? "," : "") << spec.cardinalities[f];
  man << "\ntrain_file=train.cmdata\ntrain_count=" << res.train_count
      << "\ntest_file=test.cmdata\ntest_count=" << res.test_count
      << "\nheader_bytes=" << (kMagicLen + 4 + 4 + 4 * spec.cardinalities.size())
      << "\nrecord_bytes=" << (kPixels * 4 + factors * 4) << "\n";
  if (!man) fail(errc::io, "write failed for " + res.manifest_path);
  return res;
}

Dataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open " + path);
  char magic[kMagicLen] = {};
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    fail(errc::io, "bad data magic in " + path + ": expected \"CMDATA1\", found \"" +
                       std::string(magic, strnlen(magic, kMagicLen)) + "\"");
  Dataset ds;
  const std::uint32_t count = get_u32(in, path);
  const std::uint32_t factors = get_u32(in, path);
  ds.cardinalities.resize(factors);
  for (auto& c : ds.cardinalities) c = get_u32(in, path);
  ds.pixels.resize(static_cast<size_t>(count) * kPixels);
  ds.labels.resize(static_cast<size_t>(count) * factors);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::int64_t p = 0; p < kPixels; ++p)
      ds.pixels[static_cast<size_t>(i) * kPixels + static_cast<size_t>(p)] = get_f32(in, path);
    for (std::uint32_t f = 0; f < factors; ++f)
      ds.labels[static_cast<size_t>(i) * factors + f] = get_u32(in, path);
  }
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint32_t f = 0; f < factors; ++f)
      if (ds.labels[static_cast<size_t>(i) * factors + f] >= ds.cardinalities[f])
        fail(errc::io, path + " holds an out-of-range label at image " + std::to_string(i));
  return ds;
}

std::vector<std::string> factor_names_for(const std::vector<std::uint32_t>& cardinalities) {
  const FactorSpec def = FactorSpec::defaults();
  if (cardinalities == def.cardinalities) return def.names;
  std::vector<std::string> names;
  for (size_t f = 0; f < cardinalities.size(); ++f) names.push_back("factor" + std::to_string(f));
  return names;
}

}  // namespace chunkmix::data

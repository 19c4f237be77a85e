#include "chunkmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <utility>

#include "chunkmix/autodiff.hpp"

namespace chunkmix::eval {

namespace {

using models::kImagePixels;

void check_row(const FeatureMatrix& fm, std::int64_t r) {
  if (r < 0 || r >= fm.rows) fail(errc::shape, "feature row " + std::to_string(r) + " out of range");
}

// run the encoder over a contiguous pixel block, filling count rows of out
void encode_batched(models::ModelParams& params, std::span<const float> pixels,
                    std::int64_t count, std::int64_t batch, double* out) {
  const std::int64_t dim = params.cfg.feature_dim();
  for (std::int64_t start = 0; start < count; start += batch) {
    const std::int64_t cnt = std::min(batch, count - start);
    ad::Graph g(params.precision);
    models::Binder bind(g, params);
    ad::Tensor x = g.input({cnt, models::kImageChannels, models::kImageSize, models::kImageSize},
                           pixels.subspan(static_cast<size_t>(start * kImagePixels),
                                          static_cast<size_t>(cnt * kImagePixels)));
    ad::Tensor f = bind.encode(x, ad::BnMode::infer);
    std::span<const double> v = f.values();
    std::copy(v.begin(), v.end(), out + start * dim);
  }
}

// run the decoder over feature rows, filling count images of out
void decode_batched(models::ModelParams& params, std::span<const double> feats,
                    std::int64_t count, std::int64_t batch, double* out) {
  const std::int64_t dim = params.cfg.feature_dim();
  for (std::int64_t start = 0; start < count; start += batch) {
    const std::int64_t cnt = std::min(batch, count - start);
    ad::Graph g(params.precision);
    models::Binder bind(g, params);
    ad::Tensor f = g.input({cnt, dim}, feats.subspan(static_cast<size_t>(start * dim),
                                                     static_cast<size_t>(cnt * dim)));
    ad::Tensor x = bind.decode(f, ad::BnMode::infer);
    std::span<const double> v = x.values();
    std::copy(v.begin(), v.end(), out + start * kImagePixels);
  }
}

std::vector<std::string> default_chunk_header(std::int64_t n) {
  std::vector<std::string> h;
  for (std::int64_t c = 0; c < n; ++c) h.push_back("chunk" + std::to_string(c));
  return h;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::span<const double> FeatureMatrix::row(std::int64_t r) const {
  check_row(*this, r);
  return std::span<const double>(values).subspan(static_cast<size_t>(r * dim()),
                                                 static_cast<size_t>(dim()));
}

std::span<const double> FeatureMatrix::chunk(std::int64_t r, std::int64_t c) const {
  if (c < 0 || c >= n) fail(errc::shape, "chunk " + std::to_string(c) + " out of range");
  return row(r).subspan(static_cast<size_t>(c * d), static_cast<size_t>(d));
}

std::uint32_t FeatureMatrix::label(std::int64_t r, std::int64_t f) const {
  check_row(*this, r);
  if (f < 0 || f >= factor_count()) fail(errc::shape, "factor " + std::to_string(f) + " out of range");
  return labels[static_cast<size_t>(r * factor_count() + f)];
}

FeatureMatrix extract_features(models::ModelParams& params, const data::Dataset& ds,
                               std::int64_t batch) {
  if (batch < 1) fail(errc::config, "feature extraction batch must be positive");
  if (ds.count() < 1) fail(errc::config, "cannot extract features from an empty dataset");
  FeatureMatrix fm;
  fm.n = params.cfg.n;
  fm.d = params.cfg.d;
  fm.rows = ds.count();
  fm.labels = ds.labels;
  fm.cardinalities = ds.cardinalities;
  fm.values.resize(static_cast<size_t>(fm.rows * fm.dim()));
  encode_batched(params, std::span<const float>(ds.pixels), fm.rows, batch, fm.values.data());
  for (size_t i = 0; i < fm.values.size(); ++i)
    if (!std::isfinite(fm.values[i]))
      fail(errc::numeric, "non-finite feature at row " + std::to_string(i / fm.dim()));
  return fm;
}

double retrieval_map(const FeatureMatrix& fm, std::int64_t chunk_index,
                     std::int64_t factor_index) {
  if (chunk_index < 0 || chunk_index >= fm.n)
    fail(errc::config, "chunk index " + std::to_string(chunk_index) + " out of range (n=" +
                           std::to_string(fm.n) + ")");
  if (factor_index < 0 || factor_index >= fm.factor_count())
    fail(errc::config, "factor index " + std::to_string(factor_index) + " out of range");
  const std::int64_t rows = fm.rows;
  if (rows < 2) fail(errc::config, "retrieval needs at least two items");

  bool multi_class = false;
  const std::uint32_t first = fm.label(0, factor_index);
  for (std::int64_t r = 1; r < rows && !multi_class; ++r)
    multi_class = fm.label(r, factor_index) != first;
  if (!multi_class)
    fail(errc::config, "factor " + std::to_string(factor_index) + " has a single class here");

  std::vector<std::pair<double, std::int64_t>> order(static_cast<size_t>(rows - 1));
  double total = 0.0;
  std::int64_t queries = 0;
  for (std::int64_t q = 0; q < rows; ++q) {
    const std::span<const double> fq = fm.chunk(q, chunk_index);
    size_t m = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
      if (r == q) continue;
      const std::span<const double> fr = fm.chunk(r, chunk_index);
      double d2 = 0.0;
      for (std::int64_t j = 0; j < fm.d; ++j) {
        const double diff = fq[static_cast<size_t>(j)] - fr[static_cast<size_t>(j)];
        d2 += diff * diff;
      }
      order[m++] = {d2, r};
    }
    std::sort(order.begin(), order.end());
    const std::uint32_t want = fm.label(q, factor_index);
    std::int64_t hits = 0;
    double ap = 0.0;
    for (size_t k = 0; k < order.size(); ++k) {
      if (fm.label(order[k].second, factor_index) == want) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    if (hits > 0) {
      total += ap / static_cast<double>(hits);
      ++queries;
    }
  }
  if (queries == 0) fail(errc::config, "no retrieval query has a relevant item");
  return total / static_cast<double>(queries);
}

BestChunkTable best_chunk_table(const FeatureMatrix& fm) {
  if (fm.n < 1) fail(errc::config, "best-chunk table needs at least one chunk");
  if (fm.factor_count() < 1) fail(errc::config, "best-chunk table needs at least one factor");
  BestChunkTable t;
  t.map.assign(static_cast<size_t>(fm.factor_count()),
               std::vector<double>(static_cast<size_t>(fm.n), 0.0));
  for (std::int64_t f = 0; f < fm.factor_count(); ++f)
    for (std::int64_t c = 0; c < fm.n; ++c)
      t.map[static_cast<size_t>(f)][static_cast<size_t>(c)] = retrieval_map(fm, c, f);
  for (std::int64_t f = 0; f < fm.factor_count(); ++f) {
    const std::vector<double>& row = t.map[static_cast<size_t>(f)];
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < fm.n; ++c)
      if (row[static_cast<size_t>(c)] > row[static_cast<size_t>(best)]) best = c;
    t.best_chunk.push_back(best);
    t.best_map.push_back(row[static_cast<size_t>(best)]);
    t.average += row[static_cast<size_t>(best)];
  }
  t.average /= static_cast<double>(fm.factor_count());
  return t;
}

void BestChunkTable::write_tsv(const std::string& path,
                               std::span<const std::string> factor_names) const {
  if (factor_names.size() != map.size())
    fail(errc::config, "factor name count does not match the table");
  std::ofstream out = open_out(path);
  const std::int64_t n = map.empty() ? 0 : static_cast<std::int64_t>(map[0].size());
  out << "factor";
  for (const std::string& h : default_chunk_header(n)) out << '\t' << h;
  out << "\tbest_chunk\tbest_map\n";
  for (size_t f = 0; f < map.size(); ++f) {
    out << factor_names[f];
    for (double v : map[f]) out << '\t' << fmt("%.4f", v);
    out << '\t' << best_chunk[f] << '\t' << fmt("%.4f", best_map[f]) << '\n';
  }
  out << "average\t" << fmt("%.4f", average) << '\n';
  if (!out) fail(errc::io, "write failed for " + path);
}

int ProbeModel::predict(std::span<const double> f) const {
  if (f.size() != w.size() || scale.size() != w.size())
    fail(errc::shape, "probe dimension mismatch");
  double s = b;
  for (size_t j = 0; j < w.size(); ++j) s += w[j] * (scale[j] * f[j]);
  return s >= 0.0 ? 1 : -1;
}

ProbeModel fit_centroid_probe(std::int64_t dim, std::span<const double> features,
                              std::span<const int> labels) {
  if (dim < 1) fail(errc::config, "probe needs a positive feature dimension");
  const std::int64_t rows = static_cast<std::int64_t>(labels.size());
  if (rows < 1 || features.size() != static_cast<size_t>(rows * dim))
    fail(errc::shape, "probe feature/label sizes disagree");
  std::int64_t npos = 0, nneg = 0;
  for (int c : labels) {
    if (c == 1)
      ++npos;
    else if (c == -1)
      ++nneg;
    else
      fail(errc::config, "probe labels must be +1 or -1");
  }
  if (npos == 0 || nneg == 0) fail(errc::config, "probe training needs both classes present");

  ProbeModel m;
  m.scale.assign(static_cast<size_t>(dim), 1.0);
  m.w.assign(static_cast<size_t>(dim), 0.0);
  std::vector<double> neg_mean(static_cast<size_t>(dim), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* f = features.data() + i * dim;
    std::vector<double>& acc = labels[static_cast<size_t>(i)] == 1 ? m.w : neg_mean;
    for (std::int64_t j = 0; j < dim; ++j) acc[static_cast<size_t>(j)] += f[j];
  }
  for (std::int64_t j = 0; j < dim; ++j) {
    const size_t js = static_cast<size_t>(j);
    m.w[js] = m.w[js] / static_cast<double>(npos) - neg_mean[js] / static_cast<double>(nneg);
  }

  std::vector<double> score(static_cast<size_t>(rows), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* f = features.data() + i * dim;
    double s = 0.0;
    for (std::int64_t j = 0; j < dim; ++j) s += m.w[static_cast<size_t>(j)] * f[j];
    score[static_cast<size_t>(i)] = s;
  }

  // the hinge loss is piecewise linear in b, so some margin breakpoint is
  // optimal; scan them all, preferring small |b| then small b on ties
  const auto hinge = [&](double b) {
    double h = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) {
      const double c = labels[static_cast<size_t>(i)] == 1 ? 1.0 : -1.0;
      h += std::max(0.0, 1.0 - c * (score[static_cast<size_t>(i)] + b));
    }
    return h;
  };
  bool have = false;
  double best_h = 0.0;
  for (std::int64_t i = 0; i < rows; ++i) {
    const double b = labels[static_cast<size_t>(i)] == 1 ? 1.0 - score[static_cast<size_t>(i)]
                                                         : -1.0 - score[static_cast<size_t>(i)];
    const double h = hinge(b);
    const bool better =
        !have || h < best_h ||
        (h == best_h && (std::abs(b) < std::abs(m.b) || (std::abs(b) == std::abs(m.b) && b < m.b)));
    if (better) {
      have = true;
      best_h = h;
      m.b = b;
    }
  }
  return m;
}

double linear_probe(std::int64_t dim, std::span<const double> train_features,
                    std::span<const int> train_labels, std::span<const double> test_features,
                    std::span<const int> test_labels, ProbeModel* fitted) {
  if (dim < 1) fail(errc::config, "probe needs a positive feature dimension");
  const std::int64_t tr = static_cast<std::int64_t>(train_labels.size());
  const std::int64_t te = static_cast<std::int64_t>(test_labels.size());
  if (tr < 1 || train_features.size() != static_cast<size_t>(tr * dim))
    fail(errc::shape, "probe training feature/label sizes disagree");
  if (te < 1 || test_features.size() != static_cast<size_t>(te * dim))
    fail(errc::shape, "probe test feature/label sizes disagree");

  // unit-variance scaling from training statistics (biased variance; a
  // numerically dead coordinate keeps scale 1 instead of exploding)
  std::vector<double> mean(static_cast<size_t>(dim), 0.0);
  for (std::int64_t i = 0; i < tr; ++i)
    for (std::int64_t j = 0; j < dim; ++j)
      mean[static_cast<size_t>(j)] += train_features[static_cast<size_t>(i * dim + j)];
  for (double& v : mean) v /= static_cast<double>(tr);
  std::vector<double> scale(static_cast<size_t>(dim), 1.0);
  for (std::int64_t j = 0; j < dim; ++j) {
    double var = 0.0;
    for (std::int64_t i = 0; i < tr; ++i) {
      const double dv = train_features[static_cast<size_t>(i * dim + j)] - mean[static_cast<size_t>(j)];
      var += dv * dv;
    }
    var /= static_cast<double>(tr);
    const double s = std::sqrt(var);
    if (s > 1e-8) scale[static_cast<size_t>(j)] = 1.0 / s;
  }

  std::vector<double> scaled(train_features.size());
  for (std::int64_t i = 0; i < tr; ++i)
    for (std::int64_t j = 0; j < dim; ++j)
      scaled[static_cast<size_t>(i * dim + j)] =
          train_features[static_cast<size_t>(i * dim + j)] * scale[static_cast<size_t>(j)];

  ProbeModel m = fit_centroid_probe(dim, scaled, train_labels);
  m.scale = std::move(scale);

  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < te; ++i) {
    const int pred = m.predict(test_features.subspan(static_cast<size_t>(i * dim),
                                                     static_cast<size_t>(dim)));
    if (pred == test_labels[static_cast<size_t>(i)]) ++correct;
  }
  if (fitted) *fitted = std::move(m);
  return static_cast<double>(correct) / static_cast<double>(te);
}

double probe_factor_accuracy(const FeatureMatrix& train, const FeatureMatrix& test,
                             std::int64_t factor) {
  if (train.dim() != test.dim()) fail(errc::shape, "train/test feature dimensions disagree");
  if (train.cardinalities != test.cardinalities)
    fail(errc::shape, "train/test factor structures disagree");
  if (factor < 0 || factor >= train.factor_count())
    fail(errc::config, "factor " + std::to_string(factor) + " out of range");
  const std::uint32_t k = train.cardinalities[static_cast<size_t>(factor)];
  if (k < 2) fail(errc::config, "probe factor needs at least two classes");

  double acc = 0.0;
  std::vector<int> train_y(static_cast<size_t>(train.rows));
  std::vector<int> test_y(static_cast<size_t>(test.rows));
  for (std::uint32_t cls = 0; cls < k; ++cls) {
    for (std::int64_t r = 0; r < train.rows; ++r)
      train_y[static_cast<size_t>(r)] = train.label(r, factor) == cls ? 1 : -1;
    for (std::int64_t r = 0; r < test.rows; ++r)
      test_y[static_cast<size_t>(r)] = test.label(r, factor) == cls ? 1 : -1;
    acc += linear_probe(train.dim(), train.values, train_y, test.values, test_y);
  }
  return acc / static_cast<double>(k);
}

ProbeReport probe_report(const FeatureMatrix& train, const FeatureMatrix& test) {
  ProbeReport rep;
  for (std::int64_t f = 0; f < train.factor_count(); ++f)
    rep.per_factor.push_back(probe_factor_accuracy(train, test, f));
  return rep;
}

void ProbeReport::write_tsv(const std::string& path,
                            std::span<const std::string> factor_names) const {
  if (factor_names.size() != per_factor.size())
    fail(errc::config, "factor name count does not match the report");
  std::ofstream out = open_out(path);
  out << "factor\taccuracy\n";
  for (size_t f = 0; f < per_factor.size(); ++f)
    out << factor_names[f] << '\t' << fmt("%.4f", per_factor[f]) << '\n';
  if (!out) fail(errc::io, "write failed for " + path);
}

std::uint8_t quantize8(double v) {
  const double q = std::floor(v * 255.0 + 0.5);
  if (!(q > 0.0)) return 0;
  if (q > 255.0) return 255;
  return static_cast<std::uint8_t>(q);
}

void write_ppm(const Rgb8Image& img, const std::string& path) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<size_t>(img.width * img.height * 3))
    fail(errc::config, "image extents and pixel count disagree");
  std::ofstream out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(errc::io, "write failed for " + path);
}

namespace {

// paint one 16x16 planar-channel cell into the raster
template <typename T>
void blit_cell(Rgb8Image& img, std::int64_t cell_row, std::int64_t cell_col, const T* chw) {
  constexpr std::int64_t s = models::kImageSize;
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x)
      for (std::int64_t ch = 0; ch < 3; ++ch) {
        const std::int64_t px = (cell_row * s + y) * img.width + cell_col * s + x;
        img.pixels[static_cast<size_t>(px * 3 + ch)] =
            quantize8(static_cast<double>(chw[(ch * s + y) * s + x]));
      }
}

}  // namespace

Rgb8Image transfer_grid(models::ModelParams& params, const data::ImageView& row_images,
                        const data::ImageView& col_images, std::int64_t chunk_index) {
  const std::int64_t rows = row_images.count;
  const std::int64_t cols = col_images.count;
  if (rows < 1 || cols < 1) fail(errc::config, "transfer grid needs at least one source per axis");
  const std::int64_t n = params.cfg.n;
  const std::int64_t d = params.cfg.d;
  const std::int64_t dim = params.cfg.feature_dim();
  if (chunk_index < 0 || chunk_index >= n)
    fail(errc::config, "chunk index " + std::to_string(chunk_index) + " out of range (n=" +
                           std::to_string(n) + ")");

  std::vector<double> f_rows(static_cast<size_t>(rows * dim));
  std::vector<double> f_cols(static_cast<size_t>(cols * dim));
  encode_batched(params, row_images.pixels, rows, 64, f_rows.data());
  encode_batched(params, col_images.pixels, cols, 64, f_cols.data());

  std::vector<double> mixed(static_cast<size_t>(rows * cols * dim));
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      double* dst = mixed.data() + (i * cols + j) * dim;
      std::memcpy(dst, f_rows.data() + i * dim, static_cast<size_t>(dim) * sizeof(double));
      std::memcpy(dst + chunk_index * d, f_cols.data() + j * dim + chunk_index * d,
                  static_cast<size_t>(d) * sizeof(double));
    }
  std::vector<double> decoded(static_cast<size_t>(rows * cols * kImagePixels));
  decode_batched(params, mixed, rows * cols, 64, decoded.data());

  Rgb8Image img;
  img.width = (cols + 1) * models::kImageSize;
  img.height = (rows + 1) * models::kImageSize;
  img.pixels.assign(static_cast<size_t>(img.width * img.height * 3), 0);
  for (std::int64_t j = 0; j < cols; ++j) blit_cell(img, 0, j + 1, col_images.image(j).data());
  for (std::int64_t i = 0; i < rows; ++i) blit_cell(img, i + 1, 0, row_images.image(i).data());
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j)
      blit_cell(img, i + 1, j + 1, decoded.data() + (i * cols + j) * kImagePixels);
  return img;
}

std::int64_t ShortcutReport::dead_count() const {
  std::int64_t k = 0;
  for (std::uint8_t f : dead) k += f != 0;
  return k;
}

void ShortcutReport::write_tsv(const std::string& path) const {
  std::ofstream out = open_out(path);
  out << "chunk\tsensitivity\tmask_acc\tdead\n";
  for (size_t c = 0; c < sensitivity.size(); ++c)
    out << c << '\t' << fmt("%.6f", sensitivity[c]) << '\t' << fmt("%.4f", mask_accuracy[c])
        << '\t' << int(dead[c]) << '\n';
  if (!out) fail(errc::io, "write failed for " + path);
}

ShortcutReport shortcut_report(models::ModelParams& params, const data::Dataset& ds,
                               std::uint64_t seed, std::int64_t pairs) {
  const std::int64_t n = params.cfg.n;
  const std::int64_t d = params.cfg.d;
  const std::int64_t dim = params.cfg.feature_dim();
  const std::int64_t count = ds.count();
  if (count < 2) fail(errc::config, "shortcut report needs at least two images");
  if (pairs < 1) fail(errc::config, "shortcut report needs at least one pair");

  Rng rng(mix_seed(0x73686f72ull, seed));
  std::vector<std::int64_t> ia(static_cast<size_t>(pairs));
  std::vector<std::int64_t> ib(static_cast<size_t>(pairs));
  for (std::int64_t k = 0; k < pairs; ++k) {
    ia[static_cast<size_t>(k)] = rng.below(static_cast<std::uint32_t>(count));
    ib[static_cast<size_t>(k)] =
        (ia[static_cast<size_t>(k)] + 1 + rng.below(static_cast<std::uint32_t>(count - 1))) % count;
  }
  auto bits = std::make_shared<std::vector<std::uint8_t>>(static_cast<size_t>(pairs * n));
  for (std::uint8_t& b : *bits) b = static_cast<std::uint8_t>(rng.bit());

  std::vector<float> px_a(static_cast<size_t>(pairs * kImagePixels));
  std::vector<float> px_b(static_cast<size_t>(pairs * kImagePixels));
  for (std::int64_t k = 0; k < pairs; ++k) {
    const std::span<const float> a = ds.image(ia[static_cast<size_t>(k)]);
    const std::span<const float> b = ds.image(ib[static_cast<size_t>(k)]);
    std::copy(a.begin(), a.end(), px_a.begin() + k * kImagePixels);
    std::copy(b.begin(), b.end(), px_b.begin() + k * kImagePixels);
  }

  std::vector<double> fa(static_cast<size_t>(pairs * dim));
  std::vector<double> fb(static_cast<size_t>(pairs * dim));
  encode_batched(params, px_a, pairs, 64, fa.data());
  encode_batched(params, px_b, pairs, 64, fb.data());

  std::vector<double> base(static_cast<size_t>(pairs * kImagePixels));
  decode_batched(params, fa, pairs, 64, base.data());

  ShortcutReport rep;
  std::vector<double> swapped(fa.size());
  std::vector<double> out(base.size());
  for (std::int64_t c = 0; c < n; ++c) {
    swapped = fa;
    for (std::int64_t k = 0; k < pairs; ++k)
      std::memcpy(swapped.data() + k * dim + c * d, fb.data() + k * dim + c * d,
                  static_cast<size_t>(d) * sizeof(double));
    decode_batched(params, swapped, pairs, 64, out.data());
    double sq = 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
      const double diff = out[i] - base[i];
      sq += diff * diff;
    }
    rep.sensitivity.push_back(std::sqrt(sq / static_cast<double>(pairs * kImagePixels)));
  }

  // mixed decode under the drawn masks, then classifier bit recovery
  std::vector<double> f12(fa.size());
  for (std::int64_t k = 0; k < pairs; ++k)
    for (std::int64_t c = 0; c < n; ++c) {
      const double* src = (*bits)[static_cast<size_t>(k * n + c)] ? fa.data() : fb.data();
      std::memcpy(f12.data() + k * dim + c * d, src + k * dim + c * d,
                  static_cast<size_t>(d) * sizeof(double));
    }
  std::vector<double> x3(base.size());
  decode_batched(params, f12, pairs, 64, x3.data());

  std::vector<std::int64_t> correct(static_cast<size_t>(n), 0);
  const std::int64_t batch = 64;
  for (std::int64_t start = 0; start < pairs; start += batch) {
    const std::int64_t cnt = std::min(batch, pairs - start);
    ad::Graph g(params.precision);
    models::Binder bind(g, params);
    const ad::Shape ish{cnt, models::kImageChannels, models::kImageSize, models::kImageSize};
    ad::Tensor x1 = g.input(ish, std::span<const float>(px_a).subspan(
                                     static_cast<size_t>(start * kImagePixels),
                                     static_cast<size_t>(cnt * kImagePixels)));
    ad::Tensor x2 = g.input(ish, std::span<const float>(px_b).subspan(
                                     static_cast<size_t>(start * kImagePixels),
                                     static_cast<size_t>(cnt * kImagePixels)));
    ad::Tensor x3t = g.input(ish, std::span<const double>(x3).subspan(
                                      static_cast<size_t>(start * kImagePixels),
                                      static_cast<size_t>(cnt * kImagePixels)));
    ad::Tensor y = bind.classify(x1, x2, x3t, ad::BnMode::infer);
    std::span<const double> yv = y.values();
    for (std::int64_t k = 0; k < cnt; ++k)
      for (std::int64_t c = 0; c < n; ++c) {
        const int pred = yv[static_cast<size_t>(k * n + c)] >= 0.5 ? 1 : 0;
        if (pred == (*bits)[static_cast<size_t>((start + k) * n + c)])
          ++correct[static_cast<size_t>(c)];
      }
  }
  for (std::int64_t c = 0; c < n; ++c) {
    rep.mask_accuracy.push_back(static_cast<double>(correct[static_cast<size_t>(c)]) /
                                static_cast<double>(pairs));
    rep.dead.push_back(rep.sensitivity[static_cast<size_t>(c)] < 1e-3 &&
                               rep.mask_accuracy[static_cast<size_t>(c)] < 0.55
                           ? 1
                           : 0);
  }
  return rep;
}

}  // namespace chunkmix::eval

#include "chunkmix/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace chunkmix {
namespace {

double median_low(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

void check_split_pair(const data::Dataset& train_ds, const data::Dataset& test_ds) {
  if (train_ds.count() < 2 || test_ds.count() < 2)
    fail(errc::config, "ablation needs non-trivial train and test splits");
  if (train_ds.cardinalities != test_ds.cardinalities)
    fail(errc::config, "train and test splits disagree on factor structure");
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace
}  // namespace chunkmix

namespace chunkmix::train {

eval::FeatureMatrix random_features(const data::Dataset& ds, std::int64_t n, std::int64_t d,
                                    std::uint64_t seed) {
  if (n < 1 || d < 1) fail(errc::config, "random features need a positive chunk layout");
  if (ds.count() < 1) fail(errc::config, "cannot draw random features for an empty dataset");
  eval::FeatureMatrix fm;
  fm.n = n;
  fm.d = d;
  fm.rows = ds.count();
  fm.labels = ds.labels;
  fm.cardinalities = ds.cardinalities;
  fm.values.resize(static_cast<size_t>(fm.rows * fm.dim()));
  Rng rng(mix_seed(0x72616e64666561ull, seed));  // stream tag: "randfea"
  for (double& v : fm.values) v = rng.normal();
  return fm;
}

std::vector<MethodSpec> ablation_methods(std::int64_t n, std::int64_t d) {
  const mixing::Toggles mix_only{true, false, false, false};
  const mixing::Toggles mix_c{true, false, false, true};
  const mixing::Toggles mix_g{true, false, true, false};
  const mixing::Toggles mix_cg{true, false, true, true};
  const mixing::Toggles cg{false, false, true, true};
  const mixing::Toggles ae{false, true, false, false};
  const mixing::Toggles ae_cg{false, true, true, true};
  return {
      {"Random", mix_cg, n, d, false},
      {"C+G", cg, n, d, true},
      {"AE", ae, 1, n * d, true},
      {"AE+C+G", ae_cg, n, d, true},
      {"MIX", mix_only, n, d, true},
      {"MIX+C", mix_c, n, d, true},
      {"MIX+G", mix_g, n, d, true},
      {"MIX+C+G", mix_cg, n, d, true},
  };
}

AblationReport ablation_suite(const data::Dataset& train_ds, const data::Dataset& test_ds,
                              std::span<const std::uint64_t> seeds, const TrainConfig& base,
                              const Progress& progress) {
  if (seeds.empty()) fail(errc::config, "ablation needs at least one seed");
  check_split_pair(train_ds, test_ds);

  AblationReport rep;
  rep.factor_names = data::factor_names_for(test_ds.cardinalities);
  const std::int64_t factors = test_ds.factor_count();

  for (const MethodSpec& m : ablation_methods(base.n, base.d)) {
    std::vector<std::vector<double>> best_per_seed;  // [seed][factor]
    std::vector<double> avg_per_seed;
    for (std::uint64_t seed : seeds) {
      eval::FeatureMatrix fm;
      if (m.trained) {
        TrainConfig cfg = base;
        cfg.toggles = m.toggles;
        cfg.n = m.n;
        cfg.d = m.d;
        cfg.seed = seed;
        models::ModelParams params = train(cfg, train_ds.images()).params;
        fm = eval::extract_features(params, test_ds);
      } else {
        fm = random_features(test_ds, m.n, m.d, seed);
      }
      eval::BestChunkTable t = eval::best_chunk_table(fm);
      best_per_seed.push_back(t.best_map);
      avg_per_seed.push_back(t.average);
      if (progress)
        progress(m.name + " seed " + std::to_string(seed) + ": average " + fmt4(t.average));
    }
    AblationRow row;
    row.method = m.name;
    for (std::int64_t f = 0; f < factors; ++f) {
      std::vector<double> cell;
      for (const std::vector<double>& b : best_per_seed) cell.push_back(b[static_cast<size_t>(f)]);
      row.per_factor.push_back(median_low(cell));
    }
    row.average = median_low(avg_per_seed);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void AblationReport::write_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  out << "method";
  for (const std::string& f : factor_names) out << '\t' << f;
  out << "\taverage\n";
  for (const AblationRow& row : rows) {
    out << row.method;
    for (double v : row.per_factor) out << '\t' << fmt4(v);
    out << '\t' << fmt4(row.average) << '\n';
  }
  if (!out) fail(errc::io, "write failed for " + path);
}

}  // namespace chunkmix::train

namespace chunkmix::eval {

ChunkSizeCurve chunk_size_ablation(const data::Dataset& train_ds, const data::Dataset& test_ds,
                                   std::span<const std::int64_t> sizes,
                                   const train::TrainConfig& base,
                                   const train::Progress& progress) {
  if (sizes.empty()) fail(errc::config, "chunk-size sweep needs at least one size");
  check_split_pair(train_ds, test_ds);

  ChunkSizeCurve curve;
  for (std::int64_t size : sizes) {
    if (size < 1) fail(errc::config, "chunk dimension must be positive");
    train::TrainConfig cfg = base;
    cfg.d = size;
    cfg.toggles = mixing::Toggles{true, false, true, true};
    models::ModelParams params = train::train(cfg, train_ds.images()).params;
    FeatureMatrix fm = extract_features(params, test_ds);
    curve.sizes.push_back(size);
    curve.average_map.push_back(best_chunk_table(fm).average);
    if (progress)
      progress("chunk_dim " + std::to_string(size) + ": average " + fmt4(curve.average_map.back()));
  }
  return curve;
}

void ChunkSizeCurve::write_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  out << "chunk_dim\taverage_map\n";
  for (size_t i = 0; i < sizes.size(); ++i)
    out << sizes[i] << '\t' << fmt4(average_map[i]) << '\n';
  if (!out) fail(errc::io, "write failed for " + path);
}

}  // namespace chunkmix::eval

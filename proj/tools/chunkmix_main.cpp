#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chunkmix/dataset.hpp"
#include "chunkmix/eval.hpp"
#include "chunkmix/experiments.hpp"
#include "chunkmix/models.hpp"
#include "chunkmix/runconfig.hpp"
#include "chunkmix/trainer.hpp"

namespace fs = std::filesystem;
using namespace chunkmix;

namespace {

std::string data_file(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void make_dirs(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(errc::io, "cannot create " + dir + ": " + ec.message());
}

void make_parent_dirs(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) make_dirs(parent.string());
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    T v{};
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      fail(errc::config, std::string("bad ") + what + " list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(errc::config, std::string(what) + " list is empty");
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::int64_t copies = 25;
};

int run_gen_data(const GenArgs& a) {
  const data::FactorSpec spec = data::FactorSpec::defaults();
  const data::GenerateResult res = data::generate(spec, a.out, a.seed, a.copies);
  std::printf("train: %s (%lld images)\n", res.train_path.c_str(),
              static_cast<long long>(res.train_count));
  std::printf("test: %s (%lld images)\n", res.test_path.c_str(),
              static_cast<long long>(res.test_count));
  std::printf("manifest: %s\n", res.manifest_path.c_str());
  std::printf("total: %lld images\n", static_cast<long long>(res.train_count + res.test_count));
  return 0;
}

// ---------------------------------------------------------------- train

// every training key is also a flag; flags win over the config file
const char* const kTrainKeys[] = {"data",     "out",      "seed",     "epochs",  "batch",
                                  "lr",       "beta1",    "lambda_m", "lambda_g", "lambda_c",
                                  "toggles",  "chunks",   "chunk_dim", "precision"};

struct TrainArgs {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> opts;
};

int run_train(const TrainArgs& a) {
  cli::RunConfig rc;
  if (!a.config.empty()) rc = cli::parse_run_config(a.config);
  for (const char* key : kTrainKeys)
    if (a.opts.at(key)->count() > 0) cli::set_key(rc, key, a.values.at(key));
  if (rc.data.empty())
    fail(errc::config, "no dataset directory (set data= in the config or pass --data)");

  const data::Dataset train_ds = data::load(data_file(rc.data, "train.cmdata"));
  make_dirs(rc.out);

  train::TrainHooks hooks;
  hooks.on_epoch = [&](const models::ModelParams&, std::int64_t epoch) {
    std::printf("epoch %lld/%lld\n", static_cast<long long>(epoch + 1),
                static_cast<long long>(rc.train.epochs));
    std::fflush(stdout);
  };
  const train::TrainResult res = train::train(rc.train, train_ds.images(), hooks);

  const std::string ckpt = (fs::path(rc.out) / "checkpoint.bin").string();
  const std::string log = (fs::path(rc.out) / "train_log.tsv").string();
  models::save_checkpoint(res.params, ckpt, rc.raw);
  res.log.write_tsv(log);

  const train::LogRow& last = res.log.rows.back();
  std::printf("final: L_M=%.6f g_loss=%.6f d_loss=%.6f L_C=%.6f cls_acc=%.4f\n", last.l_mix,
              last.g_loss, last.d_loss, last.l_cls, last.cls_acc);
  if (res.clamp_events > 0)
    std::printf("warning: classifier output clamped %lld times\n",
                static_cast<long long>(res.clamp_events));
  std::printf("wrote %s\nwrote %s\n", ckpt.c_str(), log.c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out = ".";
  bool probe = false;
  bool retrieval = false;
  bool shortcut = false;
};

int run_eval(const EvalArgs& a) {
  const bool all = !a.probe && !a.retrieval && !a.shortcut;
  models::ModelParams params = models::load_checkpoint(a.checkpoint);
  const data::Dataset test_ds = data::load(data_file(a.data, "test.cmdata"));
  const std::vector<std::string> names = data::factor_names_for(test_ds.cardinalities);
  make_dirs(a.out);

  eval::FeatureMatrix fm_test;
  const auto test_features = [&]() -> const eval::FeatureMatrix& {
    if (fm_test.rows == 0) fm_test = eval::extract_features(params, test_ds);
    return fm_test;
  };

  if (all || a.retrieval) {
    const eval::BestChunkTable table = eval::best_chunk_table(test_features());
    const std::string path = (fs::path(a.out) / "retrieval.tsv").string();
    table.write_tsv(path, names);
    std::printf("wrote %s (average best-chunk mAP %.4f)\n", path.c_str(), table.average);
  }
  if (all || a.probe) {
    const data::Dataset train_ds = data::load(data_file(a.data, "train.cmdata"));
    eval::FeatureMatrix fm_train = eval::extract_features(params, train_ds);
    const eval::ProbeReport rep = eval::probe_report(fm_train, test_features());
    const std::string path = (fs::path(a.out) / "probe.tsv").string();
    rep.write_tsv(path, names);
    std::printf("wrote %s\n", path.c_str());
  }
  if (all || a.shortcut) {
    const eval::ShortcutReport rep = eval::shortcut_report(params, test_ds);
    const std::string path = (fs::path(a.out) / "shortcut.tsv").string();
    rep.write_tsv(path);
    std::printf("wrote %s (%lld dead chunks)\n", path.c_str(),
                static_cast<long long>(rep.dead_count()));
  }
  return 0;
}

// ---------------------------------------------------------------- grid

struct GridArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::int64_t chunk = 0;
  std::int64_t rows = 8;
  std::int64_t cols = 8;
  std::uint64_t seed = 1;
  std::string row_idx;
  std::string col_idx;
};

std::vector<float> gather_pixels(const data::Dataset& ds, const std::vector<std::int64_t>& idx) {
  std::vector<float> px;
  px.reserve(idx.size() * static_cast<size_t>(data::kPixels));
  for (std::int64_t i : idx) {
    const std::span<const float> img = ds.image(i);
    px.insert(px.end(), img.begin(), img.end());
  }
  return px;
}

int run_grid(const GridArgs& a) {
  models::ModelParams params = models::load_checkpoint(a.checkpoint);
  const data::Dataset test_ds = data::load(data_file(a.data, "test.cmdata"));
  if (a.rows < 1 || a.cols < 1) fail(errc::config, "grid needs at least one row and one column");

  std::vector<std::int64_t> rows_idx, cols_idx;
  if (!a.row_idx.empty()) rows_idx = parse_list<std::int64_t>(a.row_idx, "row index");
  if (!a.col_idx.empty()) cols_idx = parse_list<std::int64_t>(a.col_idx, "column index");
  if (rows_idx.empty() || cols_idx.empty()) {
    // deterministic draw without replacement from the test split
    const std::int64_t need = (rows_idx.empty() ? a.rows : 0) + (cols_idx.empty() ? a.cols : 0);
    if (test_ds.count() < need)
      fail(errc::config, "test split too small for " + std::to_string(need) + " grid sources");
    Rng rng(mix_seed(0x67726964ull, a.seed));
    std::vector<std::int64_t> pool(static_cast<size_t>(test_ds.count()));
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<std::int64_t>(i);
    for (std::int64_t k = 0; k < need; ++k) {
      const std::int64_t j = k + rng.below(static_cast<std::uint32_t>(pool.size() - k));
      std::swap(pool[static_cast<size_t>(k)], pool[static_cast<size_t>(j)]);
    }
    std::int64_t at = 0;
    if (rows_idx.empty()) {
      rows_idx.assign(pool.begin(), pool.begin() + a.rows);
      at = a.rows;
    }
    if (cols_idx.empty()) cols_idx.assign(pool.begin() + at, pool.begin() + at + a.cols);
  }
  for (std::int64_t i : rows_idx)
    if (i < 0 || i >= test_ds.count())
      fail(errc::config, "row source index " + std::to_string(i) + " out of range");
  for (std::int64_t i : cols_idx)
    if (i < 0 || i >= test_ds.count())
      fail(errc::config, "column source index " + std::to_string(i) + " out of range");

  const std::vector<float> row_px = gather_pixels(test_ds, rows_idx);
  const std::vector<float> col_px = gather_pixels(test_ds, cols_idx);
  const data::ImageView rows_iv{static_cast<std::int64_t>(rows_idx.size()),
                                std::span<const float>(row_px)};
  const data::ImageView cols_iv{static_cast<std::int64_t>(cols_idx.size()),
                                std::span<const float>(col_px)};

  const eval::Rgb8Image img = eval::transfer_grid(params, rows_iv, cols_iv, a.chunk);
  make_parent_dirs(a.out);
  eval::write_ppm(img, a.out);
  std::printf("wrote %s (%lldx%lld)\n", a.out.c_str(), static_cast<long long>(img.width),
              static_cast<long long>(img.height));
  return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string data;
  std::string seeds = "1,2,3";
  std::string out = "ablation.tsv";
  std::int64_t epochs = 40;
  std::int64_t batch = 32;
  std::int64_t chunks = 4;
  std::int64_t chunk_dim = 8;
  std::string precision = "f64";
};

int run_ablate(const AblateArgs& a) {
  const std::vector<std::uint64_t> seeds = parse_list<std::uint64_t>(a.seeds, "seed");
  const data::Dataset train_ds = data::load(data_file(a.data, "train.cmdata"));
  const data::Dataset test_ds = data::load(data_file(a.data, "test.cmdata"));
  train::TrainConfig base;
  base.epochs = a.epochs;
  base.batch = a.batch;
  base.n = a.chunks;
  base.d = a.chunk_dim;
  base.precision = cli::parse_precision(a.precision);
  const train::AblationReport rep = train::ablation_suite(
      train_ds, test_ds, seeds, base, [](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
      });
  make_parent_dirs(a.out);
  rep.write_tsv(a.out);
  std::printf("wrote %s (%zu method rows)\n", a.out.c_str(), rep.rows.size());
  return 0;
}

// ---------------------------------------------------------------- chunk-sweep

struct SweepArgs {
  std::string data;
  std::string sizes = "2,4,8,16,32,64";
  std::string out = "chunk_sweep.tsv";
  std::uint64_t seed = 1;
  std::int64_t epochs = 40;
  std::int64_t batch = 32;
  std::int64_t chunks = 4;
  std::string precision = "f64";
};

int run_sweep(const SweepArgs& a) {
  const std::vector<std::int64_t> sizes = parse_list<std::int64_t>(a.sizes, "size");
  const data::Dataset train_ds = data::load(data_file(a.data, "train.cmdata"));
  const data::Dataset test_ds = data::load(data_file(a.data, "test.cmdata"));
  train::TrainConfig base;
  base.seed = a.seed;
  base.epochs = a.epochs;
  base.batch = a.batch;
  base.n = a.chunks;
  base.precision = cli::parse_precision(a.precision);
  const eval::ChunkSizeCurve curve = eval::chunk_size_ablation(
      train_ds, test_ds, sizes, base, [](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
      });
  make_parent_dirs(a.out);
  curve.write_tsv(a.out);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int seeds = 20;
  std::string precision = "f64";
};

int run_gradcheck(const GradcheckArgs& a) {
  const ad::Precision prec = cli::parse_precision(a.precision);
  const double tol = prec == ad::Precision::f32 ? 1e-2 : 1e-4;
  const std::vector<ad::OpCheck> checks = ad::gradcheck_all_ops(a.seeds, prec);
  bool ok = true;
  for (const ad::OpCheck& c : checks) {
    const bool pass = c.max_rel_err < tol;
    ok = ok && pass;
    std::printf("%-18s %.3e%s\n", c.name.c_str(), c.max_rel_err, pass ? "" : "  FAIL");
  }
  std::printf("gradcheck %s (%zu ops, tolerance %g, %s)\n", ok ? "PASS" : "FAIL", checks.size(),
              tol, a.precision.c_str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mix/unmix autoencoder toolkit: data generation, training, evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate the factor-labeled toy dataset");
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  cmd_gen->add_option("--seed", gen.seed, "generation seed (default 1)");
  cmd_gen->add_option("--copies", gen.copies, "jittered copies per factor combination (default 25)");

  TrainArgs tr;
  CLI::App* cmd_train = app.add_subcommand("train", "train a model from a run config");
  cmd_train->add_option("--config", tr.config, "key = value run config file");
  const std::map<std::string, std::string> train_help = {
      {"data", "dataset directory (required here or in the config)"},
      {"out", "output directory (default out)"},
      {"seed", "training seed (default 1)"},
      {"epochs", "training epochs (default 40)"},
      {"batch", "minibatch size (default 32)"},
      {"lr", "learning rate (default 2e-4)"},
      {"beta1", "Adam first-moment decay (default 0.5)"},
      {"lambda_m", "reconstruction weight (default 1)"},
      {"lambda_g", "adversarial weight (default 1)"},
      {"lambda_c", "mask-classification weight (default 1)"},
      {"toggles", "comma list of mix_cycle,plain_recon,gan,cls (default mix_cycle,gan,cls)"},
      {"chunks", "feature chunk count (default 4)"},
      {"chunk_dim", "scalars per chunk (default 8)"},
      {"precision", "f64 or f32 (default f64)"},
  };
  for (const char* key : kTrainKeys) {
    std::string flag = std::string("--") + key;
    for (char& ch : flag)
      if (ch == '_') ch = '-';
    tr.opts[key] = cmd_train->add_option(flag, tr.values[key], train_help.at(key));
  }

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  cmd_eval->add_option("--data", ev.data, "dataset directory")->required();
  cmd_eval->add_option("--out", ev.out, "report directory (default .)");
  cmd_eval->add_flag("--probe", ev.probe, "linear probe accuracy per factor");
  cmd_eval->add_flag("--retrieval", ev.retrieval, "per-chunk retrieval mAP table");
  cmd_eval->add_flag("--shortcut", ev.shortcut, "per-chunk sensitivity/accuracy report");

  GridArgs gr;
  CLI::App* cmd_grid = app.add_subcommand("grid", "render an attribute-transfer grid");
  cmd_grid->add_option("--checkpoint", gr.checkpoint, "checkpoint file")->required();
  cmd_grid->add_option("--data", gr.data, "dataset directory")->required();
  cmd_grid->add_option("--chunk", gr.chunk, "chunk taken from the top-row image")->required();
  cmd_grid->add_option("--rows", gr.rows, "left-column source count (default 8)");
  cmd_grid->add_option("--cols", gr.cols, "top-row source count (default 8)");
  cmd_grid->add_option("--seed", gr.seed, "source draw seed (default 1)");
  cmd_grid->add_option("--row-idx", gr.row_idx, "explicit row source indices (comma list)");
  cmd_grid->add_option("--col-idx", gr.col_idx, "explicit column source indices (comma list)");
  cmd_grid->add_option("--out", gr.out, "output PPM path")->required();

  AblateArgs ab;
  CLI::App* cmd_ablate = app.add_subcommand("ablate", "train and score the eight method rows");
  cmd_ablate->add_option("--data", ab.data, "dataset directory")->required();
  cmd_ablate->add_option("--seeds", ab.seeds, "comma list of seeds (default 1,2,3)");
  cmd_ablate->add_option("--out", ab.out, "output TSV (default ablation.tsv)");
  cmd_ablate->add_option("--epochs", ab.epochs, "training epochs per run (default 40)");
  cmd_ablate->add_option("--batch", ab.batch, "minibatch size (default 32)");
  cmd_ablate->add_option("--chunks", ab.chunks, "feature chunk count (default 4)");
  cmd_ablate->add_option("--chunk-dim", ab.chunk_dim, "scalars per chunk (default 8)");
  cmd_ablate->add_option("--precision", ab.precision, "f64 or f32 (default f64)");

  SweepArgs sw;
  CLI::App* cmd_sweep = app.add_subcommand("chunk-sweep", "retrieval quality vs chunk dimension");
  cmd_sweep->add_option("--data", sw.data, "dataset directory")->required();
  cmd_sweep->add_option("--sizes", sw.sizes, "comma list of chunk dimensions (default 2,4,8,16,32,64)");
  cmd_sweep->add_option("--out", sw.out, "output TSV (default chunk_sweep.tsv)");
  cmd_sweep->add_option("--seed", sw.seed, "training seed (default 1)");
  cmd_sweep->add_option("--epochs", sw.epochs, "training epochs per run (default 40)");
  cmd_sweep->add_option("--batch", sw.batch, "minibatch size (default 32)");
  cmd_sweep->add_option("--chunks", sw.chunks, "feature chunk count (default 4)");
  cmd_sweep->add_option("--precision", sw.precision, "f64 or f32 (default f64)");

  GradcheckArgs gc;
  CLI::App* cmd_gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of every autodiff op");
  cmd_gradcheck->add_option("--seeds", gc.seeds, "random draws per op (default 20)");
  cmd_gradcheck->add_option("--precision", gc.precision, "f64 or f32 (default f64)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_grid->parsed()) return run_grid(gr);
    if (cmd_ablate->parsed()) return run_ablate(ab);
    if (cmd_sweep->parsed()) return run_sweep(sw);
    if (cmd_gradcheck->parsed()) return run_gradcheck(gc);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == errc::numeric ? 3 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}

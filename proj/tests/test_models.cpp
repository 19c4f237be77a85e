#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "chunkmix/models.hpp"

using namespace chunkmix;
using models::Binder;
using models::ChunkedFeature;
using models::ModelParams;
using models::NetConfig;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<double> gray_batch(std::int64_t count, double v = 0.5) {
  return std::vector<double>(static_cast<size_t>(count * models::kImagePixels), v);
}

bool same_entries(const ModelParams& a, const ModelParams& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (size_t i = 0; i < a.entries.size(); ++i) {
    const auto& ea = a.entries[i];
    const auto& eb = b.entries[i];
    if (ea.name != eb.name || ea.shape != eb.shape || ea.trainable != eb.trainable) return false;
    if (ea.value != eb.value) return false;  // element-wise bitwise for doubles sans NaN
  }
  return true;
}

}  // namespace

TEST_CASE("chunked feature views are disjoint and cover the flat vector") {
  ChunkedFeature f(3, 2, {0, 1, 2, 3, 4, 5});
  REQUIRE(f.values.size() == 6);
  for (std::int64_t i = 0; i < 3; ++i) {
    auto c = f.chunk(i);
    REQUIRE(c.size() == 2);
    CHECK(c[0] == static_cast<double>(2 * i));
    CHECK(c[1] == static_cast<double>(2 * i + 1));
  }
  f.chunk(1)[0] = 42.0;
  CHECK(f.values[2] == 42.0);
  CHECK_THROWS_AS(ChunkedFeature(3, 2, {1, 2, 3}), Error);
  CHECK_THROWS_AS(f.chunk(3), Error);
}

TEST_CASE("init is deterministic per seed and differs across seeds") {
  const ModelParams a = models::init({4, 8}, 11);
  const ModelParams b = models::init({4, 8}, 11);
  const ModelParams c = models::init({4, 8}, 12);
  CHECK(same_entries(a, b));
  CHECK_FALSE(same_entries(a, c));
}

TEST_CASE("parameter counts are stable across seeds and partition by net") {
  const ModelParams a = models::init({4, 8}, 1);
  const ModelParams b = models::init({4, 8}, 999);
  const std::int64_t total = a.count_scalars();
  CHECK(total > 0);
  CHECK(total == b.count_scalars());
  CHECK(a.count_scalars("enc.") + a.count_scalars("dec.") + a.count_scalars("dsc.") +
            a.count_scalars("cls.") ==
        total);
  // the encoder head is the only part that scales with n*d, so doubling d
  // grows enc/dec but leaves the discriminator alone
  const ModelParams wide = models::init({4, 16}, 1);
  CHECK(wide.count_scalars("enc.") > a.count_scalars("enc."));
  CHECK(wide.count_scalars("dsc.") == a.count_scalars("dsc."));
}

TEST_CASE("parameter names are unique") {
  const ModelParams p = models::init({4, 8}, 1);
  for (size_t i = 0; i < p.entries.size(); ++i)
    for (size_t j = i + 1; j < p.entries.size(); ++j)
      CHECK(p.entries[i].name != p.entries[j].name);
}

TEST_CASE("initialization convention: biases zero, batchnorm identity") {
  const ModelParams p = models::init({4, 8}, 5);
  for (double v : p.at("dec.conv3.b").value) CHECK(v == 0.0);
  for (double v : p.at("enc.fc.b").value) CHECK(v == 0.0);
  for (double v : p.at("enc.bn1.gamma").value) CHECK(v == 1.0);
  for (double v : p.at("enc.bn1.beta").value) CHECK(v == 0.0);
  for (double v : p.at("enc.bn1.running_mean").value) CHECK(v == 0.0);
  for (double v : p.at("enc.bn1.running_var").value) CHECK(v == 1.0);
  CHECK_FALSE(p.at("enc.bn1.running_mean").trainable);
  CHECK_FALSE(p.at("enc.bn1.running_var").trainable);
  CHECK(p.at("enc.bn1.gamma").trainable);
}

TEST_CASE("checkpoint round-trip restores everything bitwise") {
  ModelParams p = models::init({4, 8}, 3);
  p.at("enc.fc.b").value[0] = 0.125;  // make sure a mutated value survives
  const std::string path = temp_path("chunkmix_ckpt_roundtrip.bin");
  models::save_checkpoint(p, path, "note=hello\n");
  std::string meta;
  const ModelParams q = models::load_checkpoint(path, &meta);
  CHECK(same_entries(p, q));
  CHECK(q.cfg.n == 4);
  CHECK(q.cfg.d == 8);
  CHECK(q.precision == ad::Precision::f64);
  CHECK(meta.find("n=4\n") != std::string::npos);
  CHECK(meta.find("d=8\n") != std::string::npos);
  CHECK(meta.find("precision=f64\n") != std::string::npos);
  CHECK(meta.find("note=hello\n") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("corrupted checkpoint magic is rejected with both strings named") {
  const std::string path = temp_path("chunkmix_ckpt_badmagic.bin");
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fputs("NOTMAGIC!\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(models::load_checkpoint(path),
                       doctest::Contains("expected \"CHUNKMIX1\""), Error);
  CHECK_THROWS_AS(models::load_checkpoint(temp_path("chunkmix_ckpt_missing.bin")), Error);
  std::remove(path.c_str());
}

TEST_CASE("encode produces n*d features, deterministically in infer mode") {
  ModelParams p = models::init({4, 8}, 2);
  const std::vector<double> x = gray_batch(2, 0.3);
  ad::Graph g;
  Binder b(g, p);
  ad::Tensor xt = g.input({2, 3, 16, 16}, std::span<const double>(x));
  ad::Tensor f = b.encode(xt, ad::BnMode::infer);
  REQUIRE(f.shape() == ad::Shape{2, 32});
  for (double v : f.values()) CHECK(std::isfinite(v));
  // identical rows in, identical rows out
  for (std::int64_t j = 0; j < 32; ++j) CHECK(f.values()[j] == f.values()[32 + j]);

  ad::Graph g2;
  Binder b2(g2, p);
  ad::Tensor f2 = b2.encode(g2.input({2, 3, 16, 16}, std::span<const double>(x)), ad::BnMode::infer);
  for (std::int64_t j = 0; j < f.numel(); ++j) CHECK(f.values()[j] == f2.values()[j]);
}

TEST_CASE("decode maps n*d features to sigmoid images") {
  ModelParams p = models::init({4, 8}, 2);
  std::vector<double> f(2 * 32, 0.1);
  ad::Graph g;
  Binder b(g, p);
  ad::Tensor y = b.decode(g.input({2, 32}, std::span<const double>(f)), ad::BnMode::infer);
  REQUIRE(y.shape() == ad::Shape{2, 3, 16, 16});
  for (double v : y.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("discriminator and classifier score shapes and ranges") {
  ModelParams p = models::init({4, 8}, 2);
  const std::vector<double> x = gray_batch(3, 0.4);
  ad::Graph g;
  Binder b(g, p);
  ad::Tensor xt = g.input({3, 3, 16, 16}, std::span<const double>(x));
  ad::Tensor s = b.discriminate(xt, ad::BnMode::infer);
  REQUIRE(s.shape() == ad::Shape{3, 1});
  for (double v : s.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  ad::Tensor y = b.classify(xt, xt, xt, ad::BnMode::infer);
  REQUIRE(y.shape() == ad::Shape{3, 4});
  for (double v : y.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("wrong extents raise structured errors") {
  ModelParams p = models::init({4, 8}, 2);
  ad::Graph g;
  Binder b(g, p);
  const std::vector<double> small(2 * 3 * 8 * 8, 0.5);
  CHECK_THROWS_AS(b.encode(g.input({2, 3, 8, 8}, std::span<const double>(small)), ad::BnMode::infer),
                  Error);
  const std::vector<double> f(2 * 31, 0.0);
  CHECK_THROWS_AS(b.decode(g.input({2, 31}, std::span<const double>(f)), ad::BnMode::infer), Error);
  const std::vector<double> x2 = gray_batch(2);
  const std::vector<double> x1 = gray_batch(1);
  CHECK_THROWS_AS(b.classify(g.input({2, 3, 16, 16}, std::span<const double>(x2)),
                             g.input({1, 3, 16, 16}, std::span<const double>(x1)),
                             g.input({2, 3, 16, 16}, std::span<const double>(x2)),
                             ad::BnMode::infer),
                  Error);
}

TEST_CASE("encode/decode round trip is shape-consistent for several layouts") {
  for (const NetConfig cfg : {NetConfig{1, 32}, NetConfig{2, 4}, NetConfig{8, 2}}) {
    ModelParams p = models::init(cfg, 7);
    const std::vector<double> x = gray_batch(2, 0.6);
    ad::Graph g;
    Binder b(g, p);
    ad::Tensor f = b.encode(g.input({2, 3, 16, 16}, std::span<const double>(x)), ad::BnMode::infer);
    REQUIRE(f.shape() == ad::Shape{2, cfg.feature_dim()});
    ad::Tensor y = b.decode(f, ad::BnMode::infer);
    REQUIRE(y.shape() == ad::Shape{2, 3, 16, 16});
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "chunkmix/mixing.hpp"

using namespace chunkmix;
using ad::Graph;
using ad::Shape;
using ad::Tensor;
using mixing::Mask;
using models::ChunkedFeature;

namespace {

ChunkedFeature feat(std::int64_t n, std::int64_t d, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n * d));
  for (double& x : v) x = rng.normal();
  return ChunkedFeature(n, d, std::move(v));
}

std::shared_ptr<const std::vector<std::uint8_t>> bit_rows(std::initializer_list<std::uint8_t> bits) {
  return std::make_shared<const std::vector<std::uint8_t>>(bits);
}

Tensor in(Graph& g, Shape s, const std::vector<double>& v) {
  return g.input(std::move(s), std::span<const double>(v));
}

}  // namespace

TEST_CASE("mask expansion replicates bits and complement flips them") {
  Mask m{{1, 0, 1}};
  const std::vector<std::uint8_t> flat = m.expand(2);
  CHECK(flat == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1});
  CHECK(m.complement().bits == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(m.complement().complement().bits == m.bits);
  CHECK_THROWS_AS(m.expand(0), Error);
}

TEST_CASE("sampled masks are fair coin flips") {
  Rng rng(42);
  Mask one = mixing::sample_mask(rng, 1);
  REQUIRE(one.n() == 1);
  CHECK((one.bits[0] == 0 || one.bits[0] == 1));
  CHECK_THROWS_AS(mixing::sample_mask(rng, 0), Error);

  std::vector<std::int64_t> ones(4, 0);
  Rng rng2(7);
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    Mask m = mixing::sample_mask(rng2, 4);
    for (int i = 0; i < 4; ++i) ones[static_cast<size_t>(i)] += m.bits[static_cast<size_t>(i)];
  }
  for (std::int64_t c : ones) {
    const double freq = static_cast<double>(c) / draws;
    CHECK(freq > 0.47);
    CHECK(freq < 0.53);
  }

  Rng a(9), b(9);
  for (int k = 0; k < 50; ++k)
    CHECK(mixing::sample_mask(a, 5).bits == mixing::sample_mask(b, 5).bits);
}

TEST_CASE("mix and unmix match their defining examples") {
  ChunkedFeature f1(2, 2, {1, 1, 2, 2});
  ChunkedFeature f2(2, 2, {3, 3, 4, 4});
  CHECK(mixing::mix(f1, f2, Mask{{1, 0}}).values == std::vector<double>{1, 1, 4, 4});
  CHECK(mixing::mix(f1, f2, Mask{{1, 1}}).values == f1.values);
  CHECK(mixing::mix(f1, f2, Mask{{0, 0}}).values == f2.values);

  ChunkedFeature f3(2, 2, {5, 5, 6, 6});
  CHECK(mixing::unmix(f3, f1, Mask{{1, 0}}).values == std::vector<double>{5, 5, 2, 2});
  CHECK(mixing::unmix(f3, f1, Mask{{0, 0}}).values == f1.values);

  ChunkedFeature other(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(mixing::mix(f1, other, Mask{{1, 0}}), Error);
  CHECK_THROWS_AS(mixing::mix(f1, f2, Mask{{1, 0, 1}}), Error);
}

TEST_CASE("selector algebra holds over 1000 random cases") {
  Rng rng(1001);
  for (int k = 0; k < 1000; ++k) {
    const std::int64_t n = 1 + rng.below(6);
    const std::int64_t d = 1 + rng.below(5);
    ChunkedFeature f1 = feat(n, d, rng);
    ChunkedFeature f2 = feat(n, d, rng);
    Mask m = mixing::sample_mask(rng, n);

    // mixing a feature with itself changes nothing
    CHECK(mixing::mix(f1, f1, m).values == f1.values);
    // a perfect autoencoder makes the cycle collapse to the original
    CHECK(mixing::unmix(mixing::mix(f1, f2, m), f1, m).values == f1.values);
    // swapping operands is the same as complementing the mask
    CHECK(mixing::mix(f1, f2, m).values == mixing::mix(f2, f1, m.complement()).values);
    // the two mixes together hold every scalar exactly once
    const ChunkedFeature a = mixing::mix(f1, f2, m);
    const ChunkedFeature b = mixing::mix(f2, f1, m);
    for (size_t i = 0; i < a.values.size(); ++i)
      CHECK(a.values[i] + b.values[i] == f1.values[i] + f2.values[i]);
    // chunk i routes exactly per its bit, bitwise
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& src = m.bits[static_cast<size_t>(i)] ? f1 : f2;
      CHECK(std::memcmp(a.chunk(i).data(), src.chunk(i).data(),
                        sizeof(double) * static_cast<size_t>(d)) == 0);
    }
  }
}

namespace {

// identity stubs over 2x2 images: the flat pixels are the feature
struct StubCycle {
  Graph g;
  static constexpr std::int64_t batch = 2, pixels = 12, n = 2, d = 6;

  mixing::CycleOutput run(const std::vector<double>& x1v, const std::vector<double>& x2v,
                          std::shared_ptr<const std::vector<std::uint8_t>> masks, Tensor* x1_out) {
    Tensor x1 = g.input({batch, 3, 2, 2}, std::span<const double>(x1v));
    Tensor x2 = g.input({batch, 3, 2, 2}, std::span<const double>(x2v));
    mixing::NetFn enc = [this](Tensor x) { return g.reshape(x, {batch, pixels}); };
    mixing::NetFn dec = [this](Tensor f) { return g.reshape(f, {batch, 3, 2, 2}); };
    if (x1_out) *x1_out = x1;
    return mixing::forward_cycle(g, enc, dec, x1, x2, masks, n, d);
  }
};

}  // namespace

TEST_CASE("identity-stub cycle returns x1 exactly with zero loss and zero gradient") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x1v(24), x2v(24);
    for (double& v : x1v) v = rng.uniform();
    for (double& v : x2v) v = rng.uniform();
    auto bits = std::make_shared<std::vector<std::uint8_t>>(4);
    for (auto& b : *bits) b = rng.bit() ? 1 : 0;

    StubCycle s;
    Tensor x1;
    mixing::CycleOutput cyc = s.run(x1v, x2v, bits, &x1);
    for (std::int64_t i = 0; i < 24; ++i) CHECK(cyc.x4.values()[static_cast<size_t>(i)] == x1v[static_cast<size_t>(i)]);

    Tensor l = mixing::loss_mix(s.g, cyc.x4, x1);
    CHECK(l.scalar() == 0.0);
  }

  // all-ones mask sends x3 back to x1 as well
  StubCycle s;
  std::vector<double> x1v(24, 0.25), x2v(24, 0.75);
  mixing::CycleOutput cyc = s.run(x1v, x2v, bit_rows({1, 1, 1, 1}), nullptr);
  for (double v : cyc.x3.values()) CHECK(v == 0.25);
}

TEST_CASE("identity-stub cycle backpropagates exact zeros into trainable pixels") {
  StubCycle s;
  std::vector<double> x1v(24), x2v(24);
  Rng rng(66);
  for (double& v : x1v) v = rng.uniform();
  for (double& v : x2v) v = rng.uniform();
  Tensor x1 = s.g.param({StubCycle::batch, 3, 2, 2}, std::span<const double>(x1v));
  Tensor x2 = s.g.param({StubCycle::batch, 3, 2, 2}, std::span<const double>(x2v));
  mixing::NetFn enc = [&](Tensor x) { return s.g.reshape(x, {StubCycle::batch, 12}); };
  mixing::NetFn dec = [&](Tensor f) { return s.g.reshape(f, {StubCycle::batch, 3, 2, 2}); };
  mixing::CycleOutput cyc = mixing::forward_cycle(s.g, enc, dec, x1, x2, bit_rows({1, 0, 0, 1}), 2, 6);
  Tensor l = mixing::loss_mix(s.g, cyc.x4, x1);
  s.g.backward(l);
  for (double gr : x1.grad()) CHECK(gr == 0.0);
  for (double gr : x2.grad()) CHECK(gr == 0.0);
}

TEST_CASE("cycle output carries all seven stages with batch shapes") {
  StubCycle s;
  mixing::CycleOutput cyc =
      s.run(std::vector<double>(24, 0.5), std::vector<double>(24, 0.5), bit_rows({0, 1, 1, 0}), nullptr);
  CHECK(cyc.f1.shape() == Shape{2, 12});
  CHECK(cyc.f2.shape() == Shape{2, 12});
  CHECK(cyc.f12.shape() == Shape{2, 12});
  CHECK(cyc.x3.shape() == Shape{2, 3, 2, 2});
  CHECK(cyc.f3.shape() == Shape{2, 12});
  CHECK(cyc.f31.shape() == Shape{2, 12});
  CHECK(cyc.x4.shape() == Shape{2, 3, 2, 2});
}

TEST_CASE("cycle reconstruction loss values and gradient") {
  Graph g;
  const std::int64_t batch = 2;
  std::vector<double> x1v(batch * 768, 0.4), x4v(batch * 768, 0.5);
  Tensor x1 = in(g, {batch, 3, 16, 16}, x1v);
  Tensor x4 = g.param({batch, 3, 16, 16}, std::span<const double>(x4v));
  Tensor l = mixing::loss_mix(g, x4, x1);
  CHECK(l.scalar() == doctest::Approx(7.68).epsilon(1e-9));
  g.backward(l);
  for (double gr : x4.grad()) CHECK(gr == doctest::Approx(2.0 * 0.1 / batch).epsilon(1e-12));

  Graph g2;
  std::vector<double> a(12, 0.0), b(24, 0.0);
  CHECK_THROWS_AS(mixing::loss_mix(g2, in(g2, {1, 3, 2, 2}, a), in(g2, {2, 3, 2, 2}, b)), Error);
}

TEST_CASE("adversarial losses at reference points") {
  Graph g;
  std::vector<double> half(4, 0.5);
  mixing::GanLoss l = mixing::loss_gan(g, in(g, {4, 1}, half), in(g, {4, 1}, half));
  CHECK(std::fabs(l.d_loss.scalar() - 2.0 * std::log(2.0)) < 1e-9);
  CHECK(std::fabs(l.g_loss.scalar() - std::log(2.0)) < 1e-9);

  // confident fakes drive the generator term to zero
  std::vector<double> sure(4, 1.0 - 1e-9);
  mixing::GanLoss l2 = mixing::loss_gan(g, in(g, {4, 1}, half), in(g, {4, 1}, sure));
  CHECK(l2.g_loss.scalar() < 1e-8);

  std::vector<double> bad(4, 1.0);
  CHECK_THROWS_AS(mixing::loss_gan(g, in(g, {4, 1}, half), in(g, {4, 1}, bad)), Error);
  std::vector<double> neg(4, 0.0);
  CHECK_THROWS_AS(mixing::loss_gan(g, in(g, {4, 1}, neg), in(g, {4, 1}, half)), Error);
}

TEST_CASE("mask classification loss at reference points") {
  const std::int64_t batch = 3, n = 8;
  auto masks = std::make_shared<std::vector<std::uint8_t>>(batch * n);
  Rng rng(12);
  for (auto& b : *masks) b = rng.bit() ? 1 : 0;

  Graph g;
  std::vector<double> y_half(batch * n, 0.5);
  Tensor l = mixing::loss_cls(g, in(g, {batch, n}, y_half), masks);
  CHECK(std::fabs(l.scalar() - 8.0 * std::log(2.0)) < 1e-9);
  CHECK(g.clamp_events() == 0);

  // perfect predictions cost (almost) nothing, with the clamp engaged
  std::vector<double> y_exact(masks->size());
  for (size_t i = 0; i < y_exact.size(); ++i) y_exact[i] = (*masks)[i] ? 1.0 : 0.0;
  Tensor l2 = mixing::loss_cls(g, in(g, {batch, n}, y_exact), masks);
  CHECK(l2.scalar() < 1e-5);
  CHECK(g.clamp_events() == static_cast<std::int64_t>(masks->size()));

  // perfectly wrong predictions hit the clamped ceiling n*log(1e7)
  std::vector<double> y_wrong(masks->size());
  for (size_t i = 0; i < y_wrong.size(); ++i) y_wrong[i] = (*masks)[i] ? 0.0 : 1.0;
  Tensor l3 = mixing::loss_cls(g, in(g, {batch, n}, y_wrong), masks);
  CHECK(l3.scalar() == doctest::Approx(8.0 * std::log(1e7)).epsilon(1e-6));
}

TEST_CASE("objective assembles only the enabled terms") {
  Graph g;
  std::vector<double> one{1.0};
  mixing::LossTerms t;
  t.l_mix = in(g, {1}, one);
  std::vector<double> two{2.0};
  t.l_recon = in(g, {1}, two);
  std::vector<double> three{3.0};
  t.g_loss = in(g, {1}, three);
  std::vector<double> thirty{30.0};
  t.d_loss = in(g, {1}, thirty);
  std::vector<double> five{5.0};
  t.l_cls = in(g, {1}, five);

  mixing::Toggles all{true, true, true, true};
  mixing::Objective o = mixing::total_objective(g, t, 2.0, 1.0, 0.5, all);
  CHECK(o.min_loss.scalar() == doctest::Approx(2 * 1 + 2 * 2 + 3 + 0.5 * 5).epsilon(1e-12));
  CHECK(o.dsc_loss.defined());
  CHECK(o.dsc_loss.scalar() == 30.0);

  mixing::Toggles mix_only{true, false, false, false};
  CHECK(mixing::total_objective(g, t, 1.0, 1.0, 1.0, mix_only).min_loss.scalar() == 1.0);
  CHECK_FALSE(mixing::total_objective(g, t, 1.0, 1.0, 1.0, mix_only).dsc_loss.defined());

  CHECK(mixing::total_objective(g, t, 0.0, 0.0, 0.0, all).min_loss.scalar() == 0.0);
  CHECK_THROWS_AS(mixing::total_objective(g, t, -1.0, 0.0, 0.0, all), Error);
  CHECK_THROWS_AS(mixing::total_objective(g, t, 1.0, 1.0, 1.0, mixing::Toggles{false, false, false, false}),
                  Error);
}

namespace {

// dense little nets over 2x2 images so every loss is exercised end to end;
// `which` swaps exactly one leaf for the tensor under test
struct TinyCycleCheck {
  static constexpr std::int64_t batch = 2, pixels = 12, n = 2, d = 2, nd = 4;

  std::vector<double> x1, x2, we, be, wd, bd, ws, bs, wc, bc;
  std::shared_ptr<std::vector<std::uint8_t>> masks;

  explicit TinyCycleCheck(std::uint64_t seed) {
    Rng rng(seed);
    auto draw = [&](size_t count, double scale) {
      std::vector<double> v(count);
      for (double& x : v) x = scale * rng.normal();
      return v;
    };
    x1 = draw(batch * pixels, 0.5);
    x2 = draw(batch * pixels, 0.5);
    we = draw(nd * pixels, 0.4);
    be = draw(nd, 0.2);
    wd = draw(pixels * nd, 0.4);
    bd = draw(pixels, 0.2);
    ws = draw(pixels, 0.4);
    bs = draw(1, 0.2);
    wc = draw(n * 3 * pixels, 0.3);
    bc = draw(n, 0.2);
    masks = std::make_shared<std::vector<std::uint8_t>>(std::vector<std::uint8_t>{1, 0, 0, 1});
  }

  const std::vector<double>& leaf(int idx) const {
    const std::vector<double>* v[] = {&x1, &x2, &we, &be, &wd, &bd, &ws, &bs, &wc, &bc};
    return *v[idx];
  }

  Shape leaf_shape(int idx) const {
    switch (idx) {
      case 0:
      case 1: return {batch, 3, 2, 2};
      case 2: return {nd, pixels};
      case 3: return {nd};
      case 4: return {pixels, nd};
      case 5: return {pixels};
      case 6: return {1, pixels};
      case 7: return {1};
      case 8: return {n, 3 * pixels};
      default: return {n};
    }
  }

  Tensor build(Graph& g, int which, Tensor t) const {
    auto get = [&](int idx) -> Tensor {
      if (idx == which) return t;
      return g.input(leaf_shape(idx), std::span<const double>(leaf(idx)));
    };
    Tensor x1t = get(0), x2t = get(1);
    Tensor wet = get(2), bet = get(3), wdt = get(4), bdt = get(5);
    Tensor wst = get(6), bst = get(7), wct = get(8), bct = get(9);

    mixing::NetFn enc = [&](Tensor x) {
      return g.leaky_relu(g.linear(g.reshape(x, {batch, pixels}), wet, bet), 0.2);
    };
    mixing::NetFn dec = [&](Tensor f) {
      return g.reshape(g.sigmoid(g.linear(f, wdt, bdt)), {batch, 3, 2, 2});
    };
    mixing::CycleOutput cyc = mixing::forward_cycle(g, enc, dec, x1t, x2t, masks, n, d);

    Tensor l_m = mixing::loss_mix(g, cyc.x4, x1t);
    auto dsc = [&](Tensor x) {
      return g.sigmoid(g.linear(g.reshape(x, {batch, pixels}), wst, bst));
    };
    mixing::GanLoss gan = mixing::loss_gan(g, dsc(x1t), dsc(cyc.x3));
    std::array<Tensor, 3> xs{x1t, x2t, cyc.x3};
    Tensor y = g.sigmoid(
        g.linear(g.reshape(g.concat_channels(xs), {batch, 3 * pixels}), wct, bct));
    Tensor l_c = mixing::loss_cls(g, y, masks);
    return g.add(g.add(l_m, gan.d_loss), g.add(gan.g_loss, l_c));
  }
};

}  // namespace

TEST_CASE("full-cycle composite gradients agree with finite differences at every leaf") {
  TinyCycleCheck tc(314);
  for (int which = 0; which < 10; ++which) {
    const double err = ad::grad_check(
        [&, which](Graph& g, Tensor t) { return tc.build(g, which, t); }, tc.leaf_shape(which),
        std::span<const double>(tc.leaf(which)));
    INFO("leaf ", which);
    CHECK(err < 1e-4);
  }
}

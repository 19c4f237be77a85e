#include "chunkmix/mixing.hpp"

#include <array>
#include <cstring>
#include <string>

namespace chunkmix::mixing {

std::vector<std::uint8_t> Mask::expand(std::int64_t d) const {
  if (d <= 0) fail(errc::shape, "mask expansion needs positive chunk dimension");
  std::vector<std::uint8_t> flat(static_cast<size_t>(n() * d));
  for (std::int64_t i = 0; i < n(); ++i)
    std::memset(flat.data() + i * d, bits[static_cast<size_t>(i)], static_cast<size_t>(d));
  return flat;
}

Mask Mask::complement() const {
  Mask out;
  out.bits.reserve(bits.size());
  for (std::uint8_t b : bits) out.bits.push_back(b ? 0 : 1);
  return out;
}

Mask sample_mask(Rng& rng, std::int64_t n) {
  if (n < 1) fail(errc::config, "mask needs at least one chunk, got " + std::to_string(n));
  Mask m;
  m.bits.reserve(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) m.bits.push_back(rng.bit() ? 1 : 0);
  return m;
}

namespace {

void check_layout(const char* op, const models::ChunkedFeature& a,
                  const models::ChunkedFeature& b, const Mask& m) {
  if (a.n != b.n || a.d != b.d)
    fail(errc::shape, std::string(op) + ": chunk layouts " + std::to_string(a.n) + "x" +
                          std::to_string(a.d) + " vs " + std::to_string(b.n) + "x" +
                          std::to_string(b.d) + " differ");
  if (m.n() != a.n)
    fail(errc::shape, std::string(op) + ": mask has " + std::to_string(m.n()) +
                          " bits for " + std::to_string(a.n) + " chunks");
}

models::ChunkedFeature select(const models::ChunkedFeature& on, const models::ChunkedFeature& off,
                              const Mask& m) {
  models::ChunkedFeature out(on.n, on.d, std::vector<double>(on.values.size()));
  for (std::int64_t i = 0; i < on.n; ++i) {
    const auto& src = m.bits[static_cast<size_t>(i)] ? on : off;
    std::memcpy(out.chunk(i).data(), src.chunk(i).data(), sizeof(double) * static_cast<size_t>(on.d));
  }
  return out;
}

}  // namespace

models::ChunkedFeature mix(const models::ChunkedFeature& f1, const models::ChunkedFeature& f2,
                           const Mask& m) {
  check_layout("mix", f1, f2, m);
  return select(f1, f2, m);
}

models::ChunkedFeature unmix(const models::ChunkedFeature& f3, const models::ChunkedFeature& f1,
                             const Mask& m) {
  check_layout("unmix", f3, f1, m);
  return select(f3, f1, m);
}

CycleOutput forward_cycle(ad::Graph& g, const NetFn& encode, const NetFn& decode, ad::Tensor x1,
                          ad::Tensor x2,
                          std::shared_ptr<const std::vector<std::uint8_t>> masks, std::int64_t n,
                          std::int64_t d) {
  CycleOutput c;
  c.f1 = encode(x1);
  c.f2 = encode(x2);
  c.f12 = g.mask_mix(c.f1, c.f2, masks, n, d);
  c.x3 = decode(c.f12);
  c.f3 = encode(c.x3);
  c.f31 = g.mask_mix(c.f3, c.f1, masks, n, d);
  c.x4 = decode(c.f31);
  return c;
}

ad::Tensor loss_mix(ad::Graph& g, ad::Tensor x4, ad::Tensor x1) {
  const ad::Shape& s = g.shape_of(x4);
  ad::Tensor diff = g.sub(x4, x1);  // enforces equal shapes
  return g.mul(g.sum(g.mul(diff, diff)), 1.0 / static_cast<double>(s[0]));
}

namespace {

void check_scores(const ad::Graph& g, ad::Tensor s, const char* who) {
  for (double v : g.values(s))
    if (!(v > 0.0 && v < 1.0))
      fail(errc::numeric, std::string("scores for ") + who + " must lie strictly in (0,1), got " +
                              std::to_string(v));
}

}  // namespace

GanLoss loss_gan(ad::Graph& g, ad::Tensor s_real, ad::Tensor s_fake) {
  check_scores(g, s_real, "real images");
  check_scores(g, s_fake, "fakes");
  GanLoss l;
  l.d_loss = g.sub(0.0, g.mean(g.add(g.log(s_real), g.log(g.sub(1.0, s_fake)))));
  l.g_loss = g.sub(0.0, g.mean(g.log(s_fake)));
  return l;
}

ad::Tensor loss_cls(ad::Graph& g, ad::Tensor y,
                    std::shared_ptr<const std::vector<std::uint8_t>> masks) {
  const ad::Shape& s = g.shape_of(y);
  if (s.size() != 2)
    fail(errc::shape, "chunk predictions must be [batch, chunks], got " + ad::shape_str(s));
  if (static_cast<std::int64_t>(masks->size()) != s[0] * s[1])
    fail(errc::shape, "mask bit count " + std::to_string(masks->size()) +
                          " does not match predictions " + ad::shape_str(s));
  std::vector<double> mv(masks->size());
  for (size_t i = 0; i < mv.size(); ++i) mv[i] = (*masks)[i] ? 1.0 : 0.0;
  ad::Tensor m = g.input(s, std::span<const double>(mv));
  ad::Tensor yc = g.clamp(y, 1e-7, 1.0 - 1e-7);
  ad::Tensor ll = g.add(g.mul(m, g.log(yc)), g.mul(g.sub(1.0, m), g.log(g.sub(1.0, yc))));
  return g.mul(g.sum(ll), -1.0 / static_cast<double>(s[0]));
}

Objective total_objective(ad::Graph& g, const LossTerms& terms, double lambda_m, double lambda_g,
                          double lambda_c, const Toggles& toggles) {
  if (lambda_m < 0.0 || lambda_g < 0.0 || lambda_c < 0.0)
    fail(errc::config, "loss weights must be non-negative");
  if (!toggles.mix_cycle && !toggles.plain_recon && !toggles.gan && !toggles.cls)
    fail(errc::config, "at least one loss toggle must be enabled");
  Objective o;
  ad::Tensor acc = g.input({1}, std::span<const double>(std::array<double, 1>{0.0}));
  auto take = [&](ad::Tensor term, double weight) { acc = g.add(acc, g.mul(term, weight)); };
  if (toggles.mix_cycle) take(terms.l_mix, lambda_m);
  if (toggles.plain_recon) take(terms.l_recon, lambda_m);
  if (toggles.gan) take(terms.g_loss, lambda_g);
  if (toggles.cls) take(terms.l_cls, lambda_c);
  o.min_loss = acc;
  if (toggles.gan) o.dsc_loss = terms.d_loss;
  return o;
}

}  // namespace chunkmix::mixing

#include "chunkmix/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace chunkmix::train {

void TrainLog::write_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  out << "step\tL_M\tg_loss\td_loss\tL_C\tcls_acc\twall_ms\n";
  char buf[256];
  for (const LogRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%lld\n",
                  static_cast<long long>(r.step), r.l_mix, r.g_loss, r.d_loss, r.l_cls, r.cls_acc,
                  static_cast<long long>(r.wall_ms));
    out << buf;
  }
  if (!out) fail(errc::io, "write failed for " + path);
}

void adam_step(std::span<double> param, std::span<const double> grad, std::vector<double>& m,
               std::vector<double>& v, std::int64_t t, double lr, double beta1, double beta2,
               double eps) {
  if (param.size() != grad.size())
    fail(errc::shape, "optimizer got " + std::to_string(grad.size()) + " gradients for " +
                          std::to_string(param.size()) + " parameters");
  if (m.size() != param.size()) m.assign(param.size(), 0.0);
  if (v.size() != param.size()) v.assign(param.size(), 0.0);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    param[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

namespace {

void validate(const TrainConfig& cfg) {
  if (cfg.lambda_m < 0.0 || cfg.lambda_g < 0.0 || cfg.lambda_c < 0.0)
    fail(errc::config, "loss weights must be non-negative");
  const auto& tg = cfg.toggles;
  if (!tg.mix_cycle && !tg.plain_recon && !tg.gan && !tg.cls)
    fail(errc::config, "at least one loss toggle must be enabled");
  if (cfg.n <= 0 || cfg.d <= 0) fail(errc::config, "chunk layout must be positive");
  if (cfg.epochs < 1) fail(errc::config, "epochs must be positive");
  if (cfg.batch < 2) fail(errc::config, "batch must be at least 2 (normalization statistics)");
}

void round_vec(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const data::ImageView& images, const TrainHooks& hooks) {
  validate(cfg);
  if (images.count < 2) fail(errc::config, "training needs at least two images");
  const auto start = std::chrono::steady_clock::now();
  const auto& tg = cfg.toggles;
  const bool f32 = cfg.precision == ad::Precision::f32;
  const std::int64_t batch = cfg.batch;
  const std::int64_t n = cfg.n, d = cfg.d;
  const ad::Shape img_shape{batch, data::kChannels, data::kSide, data::kSide};

  TrainResult res;
  res.params = models::init({n, d}, cfg.seed, cfg.precision);
  res.log.seed = cfg.seed;
  const size_t entry_count = res.params.entries.size();
  std::vector<std::vector<double>> m1(entry_count), m2(entry_count);
  std::int64_t t_dsc = 0, t_min = 0;

  Rng rng(mix_seed(0x7261696eull, cfg.seed));
  const std::int64_t steps_per_epoch = std::max<std::int64_t>(1, images.count / batch);

  std::vector<double> x1v(static_cast<size_t>(batch * data::kPixels));
  std::vector<double> x2v(x1v.size());
  std::int64_t step = 0;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      ++step;
      // i.i.d. pair batch, then one fresh mask per pair
      for (std::int64_t b = 0; b < batch; ++b) {
        const auto src = images.image(static_cast<std::int64_t>(rng.below(
            static_cast<std::uint32_t>(images.count))));
        for (std::int64_t p = 0; p < data::kPixels; ++p)
          x1v[static_cast<size_t>(b * data::kPixels + p)] = src[static_cast<size_t>(p)];
      }
      for (std::int64_t b = 0; b < batch; ++b) {
        const auto src = images.image(static_cast<std::int64_t>(rng.below(
            static_cast<std::uint32_t>(images.count))));
        for (std::int64_t p = 0; p < data::kPixels; ++p)
          x2v[static_cast<size_t>(b * data::kPixels + p)] = src[static_cast<size_t>(p)];
      }
      auto masks = std::make_shared<std::vector<std::uint8_t>>();
      masks->reserve(static_cast<size_t>(batch * n));
      for (std::int64_t b = 0; b < batch; ++b) {
        const mixing::Mask mk = mixing::sample_mask(rng, n);
        masks->insert(masks->end(), mk.bits.begin(), mk.bits.end());
      }

      ad::Graph g(cfg.precision);
      models::Binder bind(g, res.params);
      ad::Tensor x1 = g.input(img_shape, std::span<const double>(x1v));
      ad::Tensor x2 = g.input(img_shape, std::span<const double>(x2v));
      auto enc = [&](ad::Tensor x) { return bind.encode(x, ad::BnMode::train); };
      auto dec = [&](ad::Tensor f) { return bind.decode(f, ad::BnMode::train); };

      LogRow row;
      row.step = step;
      auto gate = [&](double v, const char* what) {
        if (!std::isfinite(v))
          fail(errc::numeric, std::string(what) + " went non-finite at step " +
                                  std::to_string(step) + " (L_M=" + std::to_string(row.l_mix) +
                                  " g=" + std::to_string(row.g_loss) + " d=" +
                                  std::to_string(row.d_loss) + " L_C=" + std::to_string(row.l_cls) +
                                  ")");
        return v;
      };

      auto adam_group = [&](std::string_view prefix, std::int64_t t) {
        bind.for_trainable(prefix, [&](models::NamedParam& e, ad::Tensor bound) {
          const size_t idx = static_cast<size_t>(&e - res.params.entries.data());
          adam_step(e.value, bound.grad(), m1[idx], m2[idx], t, cfg.lr, cfg.beta1, cfg.beta2,
                    cfg.eps);
          if (f32) {
            round_vec(e.value);
            round_vec(m1[idx]);
            round_vec(m2[idx]);
          }
        });
      };

      mixing::LossTerms terms;
      mixing::CycleOutput cyc;
      const bool need_cycle = tg.mix_cycle || tg.gan || tg.cls;
      if (need_cycle) {
        cyc = mixing::forward_cycle(g, enc, dec, x1, x2, masks, n, d);
        if (tg.mix_cycle) {
          terms.l_mix = mixing::loss_mix(g, cyc.x4, x1);
          row.l_mix = gate(terms.l_mix.scalar(), "mixing loss");
        }
      }
      if (tg.plain_recon) {
        terms.l_recon = mixing::loss_mix(g, dec(enc(x1)), x1);
        row.l_mix = gate(terms.l_recon.scalar(), "reconstruction loss");
      }
      if (tg.gan) {
        ad::Tensor x3d = g.detach(cyc.x3);
        ad::Tensor s_real = bind.discriminate(x1, ad::BnMode::train);
        ad::Tensor s_fake = bind.discriminate(x3d, ad::BnMode::train);
        const mixing::GanLoss gl = mixing::loss_gan(g, s_real, s_fake);
        terms.d_loss = gl.d_loss;
        row.d_loss = gate(gl.d_loss.scalar(), "discriminator loss");
        g.backward(gl.d_loss);
        adam_group("dsc.", ++t_dsc);
        // updated discriminator re-enters the same tape for the generator term
        bind.rebind("dsc.");
        ad::Tensor s_fake_min = bind.discriminate(cyc.x3, ad::BnMode::train);
        terms.g_loss = g.sub(0.0, g.mean(g.log(s_fake_min)));
        row.g_loss = gate(terms.g_loss.scalar(), "generator loss");
      }
      if (tg.cls) {
        ad::Tensor y = bind.classify(x1, x2, cyc.x3, ad::BnMode::train);
        terms.l_cls = mixing::loss_cls(g, y, masks);
        row.l_cls = gate(terms.l_cls.scalar(), "chunk classification loss");
        const auto yv = g.values(y);
        std::int64_t hits = 0;
        for (size_t i = 0; i < yv.size(); ++i)
          hits += (yv[i] >= 0.5) == ((*masks)[i] != 0);
        row.cls_acc = static_cast<double>(hits) / static_cast<double>(yv.size());
      }

      const mixing::Objective obj =
          mixing::total_objective(g, terms, cfg.lambda_m, cfg.lambda_g, cfg.lambda_c, tg);
      gate(obj.min_loss.scalar(), "total objective");
      g.backward(obj.min_loss);
      ++t_min;
      adam_group("enc.", t_min);
      adam_group("dec.", t_min);
      if (tg.cls) adam_group("cls.", t_min);

      res.clamp_events += g.clamp_events();
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      res.log.rows.push_back(row);
    }
    if (hooks.on_epoch) hooks.on_epoch(res.params, epoch);
  }
  return res;
}

}  // namespace chunkmix::train

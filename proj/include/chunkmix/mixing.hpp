#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "chunkmix/autodiff.hpp"
#include "chunkmix/common.hpp"
#include "chunkmix/models.hpp"

namespace chunkmix::mixing {

// per-chunk binary selector: bit i = 1 routes chunk i from the first operand
struct Mask {
  std::vector<std::uint8_t> bits;

  std::int64_t n() const { return static_cast<std::int64_t>(bits.size()); }
  // flat selector of length n*d replicating each bit d times
  std::vector<std::uint8_t> expand(std::int64_t d) const;
  Mask complement() const;
};

// i.i.d. fair bits, degenerate all-zeros/all-ones masks included
Mask sample_mask(Rng& rng, std::int64_t n);

// exact-copy combination: chunk i from f1 iff bit i is set, else from f2
models::ChunkedFeature mix(const models::ChunkedFeature& f1, const models::ChunkedFeature& f2,
                           const Mask& m);
// chunk i from f3 iff bit i is set, else from f1
models::ChunkedFeature unmix(const models::ChunkedFeature& f3, const models::ChunkedFeature& f1,
                             const Mask& m);

// every intermediate of the six-step cycle, retained for losses and inspection
struct CycleOutput {
  ad::Tensor f1, f2, f12, x3, f3, f31, x4;
};

using NetFn = std::function<ad::Tensor(ad::Tensor)>;

// encode both inputs, swap masked chunks, decode, re-encode, swap back, decode.
// masks holds one row of n bits per pair in the batch.
CycleOutput forward_cycle(ad::Graph& g, const NetFn& encode, const NetFn& decode, ad::Tensor x1,
                          ad::Tensor x2,
                          std::shared_ptr<const std::vector<std::uint8_t>> masks, std::int64_t n,
                          std::int64_t d);

// mean over batch of the summed squared pixel difference
ad::Tensor loss_mix(ad::Graph& g, ad::Tensor x4, ad::Tensor x1);

struct GanLoss {
  ad::Tensor d_loss;  // -mean[log s_real + log(1 - s_fake)]
  ad::Tensor g_loss;  // -mean[log s_fake] (non-saturating)
};
GanLoss loss_gan(ad::Graph& g, ad::Tensor s_real, ad::Tensor s_fake);

// binary cross-entropy between per-chunk predictions y in (0,1) and the mask
// bits, summed over chunks, averaged over batch; y clamped to
// [1e-7, 1 - 1e-7] (clamp hits are counted on the graph)
ad::Tensor loss_cls(ad::Graph& g, ad::Tensor y,
                    std::shared_ptr<const std::vector<std::uint8_t>> masks);

struct Toggles {
  bool mix_cycle = true;
  bool plain_recon = false;
  bool gan = true;
  bool cls = true;
};

struct LossTerms {
  ad::Tensor l_mix;    // defined iff mix_cycle
  ad::Tensor l_recon;  // defined iff plain_recon
  ad::Tensor g_loss;   // defined iff gan
  ad::Tensor d_loss;   // defined iff gan
  ad::Tensor l_cls;    // defined iff cls
};

struct Objective {
  ad::Tensor min_loss;  // for the encoder/decoder/classifier update
  ad::Tensor dsc_loss;  // for the discriminator update; undefined without gan
};

// weighted sum over the enabled toggles; reconstruction terms share lambda_m
Objective total_objective(ad::Graph& g, const LossTerms& terms, double lambda_m, double lambda_g,
                          double lambda_c, const Toggles& toggles);

}  // namespace chunkmix::mixing

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chunkmix/autodiff.hpp"
#include "chunkmix/common.hpp"

namespace chunkmix::models {

inline constexpr std::int64_t kImageSize = 16;
inline constexpr std::int64_t kImageChannels = 3;
inline constexpr std::int64_t kImagePixels = kImageChannels * kImageSize * kImageSize;

// one sample's feature vector split into n chunks of d scalars
struct ChunkedFeature {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::vector<double> values;  // length n*d, chunk i occupies [i*d, (i+1)*d)

  ChunkedFeature() = default;
  ChunkedFeature(std::int64_t n_chunks, std::int64_t chunk_dim, std::vector<double> vals);

  std::span<const double> chunk(std::int64_t i) const;
  std::span<double> chunk(std::int64_t i);
};

struct NetConfig {
  std::int64_t n = 4;  // chunk count
  std::int64_t d = 8;  // chunk dimension

  std::int64_t feature_dim() const { return n * d; }
};

// a named tensor of persistent state; batchnorm running statistics ride along
// with trainable=false so checkpoints capture them
struct NamedParam {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;
  bool trainable = true;
};

struct ModelParams {
  NetConfig cfg;
  ad::Precision precision = ad::Precision::f64;
  std::vector<NamedParam> entries;

  NamedParam& at(std::string_view name);
  const NamedParam& at(std::string_view name) const;
  bool has(std::string_view name) const;
  // total scalar count under a name prefix ("" = everything)
  std::int64_t count_scalars(std::string_view prefix = {}) const;
};

// deterministic initialization: conv/dense weights from normal(0, 0.02),
// biases zero, batchnorm scale 1 / shift 0 / running stats (0, 1)
ModelParams init(const NetConfig& cfg, std::uint64_t seed,
                 ad::Precision prec = ad::Precision::f64);

// Checkpoint layout: magic "CHUNKMIX1\n"; per entry u32 LE name length, name
// bytes, u32 rank, u32 extents, f64 LE payload; a zero name length terminates
// the records; the rest of the file is a UTF-8 metadata block that always
// starts with n/d/precision lines followed by the caller's echo.
void save_checkpoint(const ModelParams& p, const std::string& path,
                     const std::string& metadata);
ModelParams load_checkpoint(const std::string& path, std::string* metadata = nullptr);

// Materializes stored parameters as tape nodes on demand and runs the four
// nets. Handles are cached per name so one training step sees one node per
// parameter; rebind() drops a prefix's cache so freshly updated values can
// re-enter the same tape (the discriminator update mid-step relies on this).
class Binder {
 public:
  Binder(ad::Graph& g, ModelParams& p);

  ad::Tensor tensor(std::string_view name);
  void rebind(std::string_view prefix);

  // [N,3,16,16] -> [N, n*d]
  ad::Tensor encode(ad::Tensor x, ad::BnMode mode);
  // [N, n*d] -> [N,3,16,16], sigmoid pixels in (0,1)
  ad::Tensor decode(ad::Tensor f, ad::BnMode mode);
  // [N,3,16,16] -> [N,1] scores in (0,1)
  ad::Tensor discriminate(ad::Tensor x, ad::BnMode mode);
  // three equal-sized image batches, channel-concatenated -> [N,n] in (0,1)
  ad::Tensor classify(ad::Tensor x1, ad::Tensor x2, ad::Tensor x3, ad::BnMode mode);

  // visit every trainable entry under prefix with its currently bound tensor
  void for_trainable(std::string_view prefix,
                     const std::function<void(NamedParam&, ad::Tensor)>& fn);

  ad::Graph& graph() { return *g_; }
  ModelParams& params() { return *p_; }

 private:
  ad::Tensor conv_bn_lrelu(ad::Tensor h, const std::string& net, int stage,
                           std::int64_t stride, ad::BnMode mode);
  ad::Tensor bn(ad::Tensor h, const std::string& stem, ad::BnMode mode);
  ad::Tensor body_16_to_512(ad::Tensor x, const std::string& net, ad::BnMode mode);

  ad::Graph* g_;
  ModelParams* p_;
  std::map<std::string, ad::Tensor, std::less<>> bound_;
};

}  // namespace chunkmix::models

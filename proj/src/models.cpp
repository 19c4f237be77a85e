#include "chunkmix/models.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace chunkmix::models {

// ---------------------------------------------------------------------------
// ChunkedFeature
// ---------------------------------------------------------------------------

ChunkedFeature::ChunkedFeature(std::int64_t n_chunks, std::int64_t chunk_dim,
                               std::vector<double> vals)
    : n(n_chunks), d(chunk_dim), values(std::move(vals)) {
  if (n <= 0 || d <= 0)
    fail(errc::shape, "feature needs positive chunk count and dimension, got " +
                          std::to_string(n) + "x" + std::to_string(d));
  if (static_cast<std::int64_t>(values.size()) != n * d)
    fail(errc::shape, "feature length " + std::to_string(values.size()) +
                          " does not match " + std::to_string(n) + " chunks of " +
                          std::to_string(d));
}

std::span<const double> ChunkedFeature::chunk(std::int64_t i) const {
  if (i < 0 || i >= n) fail(errc::shape, "chunk index " + std::to_string(i) + " out of range");
  return {values.data() + i * d, static_cast<size_t>(d)};
}

std::span<double> ChunkedFeature::chunk(std::int64_t i) {
  if (i < 0 || i >= n) fail(errc::shape, "chunk index " + std::to_string(i) + " out of range");
  return {values.data() + i * d, static_cast<size_t>(d)};
}

// ---------------------------------------------------------------------------
// ModelParams
// ---------------------------------------------------------------------------

NamedParam& ModelParams::at(std::string_view name) {
  for (auto& e : entries)
    if (e.name == name) return e;
  fail(errc::config, "unknown parameter \"" + std::string(name) + "\"");
}

const NamedParam& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

bool ModelParams::has(std::string_view name) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const NamedParam& e) { return e.name == name; });
}

std::int64_t ModelParams::count_scalars(std::string_view prefix) const {
  std::int64_t total = 0;
  for (const auto& e : entries)
    if (e.name.starts_with(prefix)) total += static_cast<std::int64_t>(e.value.size());
  return total;
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

namespace {

void round_through_float(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

struct Builder {
  ModelParams& p;
  Rng& rng;
  bool f32;

  void weights(const std::string& name, ad::Shape shape) {
    NamedParam e{name, std::move(shape), {}, true};
    e.value.resize(static_cast<size_t>(ad::numel(e.shape)));
    for (double& x : e.value) x = 0.02 * rng.normal();
    if (f32) round_through_float(e.value);
    p.entries.push_back(std::move(e));
  }

  void constant(const std::string& name, std::int64_t len, double fill, bool trainable) {
    p.entries.push_back(
        {name, {len}, std::vector<double>(static_cast<size_t>(len), fill), trainable});
  }

  void bias(const std::string& name, std::int64_t len) { constant(name, len, 0.0, true); }

  void batchnorm(const std::string& stem, std::int64_t channels) {
    constant(stem + ".gamma", channels, 1.0, true);
    constant(stem + ".beta", channels, 0.0, true);
    constant(stem + ".running_mean", channels, 0.0, false);
    constant(stem + ".running_var", channels, 1.0, false);
  }

  // shared 16x16 -> 512 convolutional trunk
  void trunk(const std::string& net, std::int64_t in_channels) {
    weights(net + ".conv1.w", {32, in_channels, 3, 3});
    batchnorm(net + ".bn1", 32);
    weights(net + ".conv2.w", {64, 32, 3, 3});
    batchnorm(net + ".bn2", 64);
    weights(net + ".conv3.w", {128, 64, 3, 3});
    batchnorm(net + ".bn3", 128);
  }
};

}  // namespace

ModelParams init(const NetConfig& cfg, std::uint64_t seed, ad::Precision prec) {
  if (cfg.n <= 0 || cfg.d <= 0)
    fail(errc::config, "chunk layout " + std::to_string(cfg.n) + "x" + std::to_string(cfg.d) +
                           " must be positive");
  ModelParams p;
  p.cfg = cfg;
  p.precision = prec;
  Rng rng(mix_seed(0x9e3779b97f4a7c15ull, seed));
  Builder b{p, rng, prec == ad::Precision::f32};
  const std::int64_t nd = cfg.feature_dim();

  b.trunk("enc", kImageChannels);
  b.weights("enc.fc.w", {nd, 512});
  b.bias("enc.fc.b", nd);

  b.weights("dec.fc.w", {nd, 512});  // matmul orientation: [N,nd]·[nd,512]
  b.batchnorm("dec.bn0", 128);
  b.weights("dec.conv1.w", {64, 128, 3, 3});
  b.batchnorm("dec.bn1", 64);
  b.weights("dec.conv2.w", {32, 64, 3, 3});
  b.batchnorm("dec.bn2", 32);
  b.weights("dec.conv3.w", {3, 32, 3, 3});
  b.bias("dec.conv3.b", 3);

  b.trunk("dsc", kImageChannels);
  b.weights("dsc.fc.w", {1, 512});
  b.bias("dsc.fc.b", 1);

  b.trunk("cls", 3 * kImageChannels);
  b.weights("cls.fc.w", {cfg.n, 512});
  b.bias("cls.fc.b", cfg.n);

  return p;
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "CHUNKMIX1\n";
constexpr size_t kMagicLen = 10;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                 static_cast<unsigned char>(v >> 16),
                                 static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    fail(errc::io, "checkpoint " + path + " truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<size_t>(i)] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b.data()), 8);
}

double get_f64(std::istream& in, const std::string& path) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8))
    fail(errc::io, "checkpoint " + path + " truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[static_cast<size_t>(i)]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

// first value of "key=..." in a metadata block, or empty
std::string meta_value(const std::string& meta, std::string_view key) {
  size_t pos = 0;
  while (pos < meta.size()) {
    size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    std::string_view line(meta.data() + pos, eol - pos);
    if (line.size() > key.size() && line.substr(0, key.size()) == key && line[key.size()] == '=')
      return std::string(line.substr(key.size() + 1));
    pos = eol + 1;
  }
  return {};
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path, const std::string& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open " + path + " for writing");
  out.write(kMagic, kMagicLen);
  for (const auto& e : p.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::int64_t ext : e.shape) put_u32(out, static_cast<std::uint32_t>(ext));
    for (double v : e.value) put_f64(out, v);
  }
  put_u32(out, 0);  // sentinel: records end, metadata follows
  out << "n=" << p.cfg.n << "\nd=" << p.cfg.d << "\nprecision="
      << (p.precision == ad::Precision::f32 ? "f32" : "f64") << "\n"
      << metadata;
  if (!out) fail(errc::io, "write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path, std::string* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open checkpoint " + path);
  char magic[kMagicLen] = {};
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    fail(errc::io, "bad checkpoint magic in " + path + ": expected \"CHUNKMIX1\"");
  ModelParams p;
  for (;;) {
    const std::uint32_t name_len = get_u32(in, path);
    if (name_len == 0) break;
    NamedParam e;
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) fail(errc::io, "checkpoint " + path + " truncated");
    const std::uint32_t rank = get_u32(in, path);
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      e.shape.push_back(static_cast<std::int64_t>(get_u32(in, path)));
      count *= e.shape.back();
    }
    e.value.resize(static_cast<size_t>(count));
    for (double& v : e.value) v = get_f64(in, path);
    e.trainable = !e.name.ends_with(".running_mean") && !e.name.ends_with(".running_var");
    p.entries.push_back(std::move(e));
  }
  std::string meta((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string n = meta_value(meta, "n"), d = meta_value(meta, "d");
  if (n.empty() || d.empty())
    fail(errc::io, "checkpoint " + path + " metadata lacks chunk layout");
  p.cfg.n = std::stoll(n);
  p.cfg.d = std::stoll(d);
  p.precision = meta_value(meta, "precision") == "f32" ? ad::Precision::f32 : ad::Precision::f64;
  if (metadata) *metadata = std::move(meta);
  return p;
}

// ---------------------------------------------------------------------------
// Binder
// ---------------------------------------------------------------------------

Binder::Binder(ad::Graph& g, ModelParams& p) : g_(&g), p_(&p) {}

ad::Tensor Binder::tensor(std::string_view name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  NamedParam& e = p_->at(name);
  ad::Tensor t = e.trainable ? g_->param(e.shape, std::span<const double>(e.value))
                             : g_->input(e.shape, std::span<const double>(e.value));
  bound_.emplace(std::string(name), t);
  return t;
}

void Binder::rebind(std::string_view prefix) {
  for (auto it = bound_.begin(); it != bound_.end();)
    it = it->first.starts_with(prefix) ? bound_.erase(it) : std::next(it);
}

void Binder::for_trainable(std::string_view prefix,
                           const std::function<void(NamedParam&, ad::Tensor)>& fn) {
  for (auto& e : p_->entries)
    if (e.trainable && e.name.starts_with(prefix)) fn(e, tensor(e.name));
}

ad::Tensor Binder::bn(ad::Tensor h, const std::string& stem, ad::BnMode mode) {
  NamedParam& rm = p_->at(stem + ".running_mean");
  NamedParam& rv = p_->at(stem + ".running_var");
  return g_->batchnorm(h, tensor(stem + ".gamma"), tensor(stem + ".beta"),
                       std::span<double>(rm.value), std::span<double>(rv.value), 0.9, mode);
}

ad::Tensor Binder::conv_bn_lrelu(ad::Tensor h, const std::string& net, int stage,
                                 std::int64_t stride, ad::BnMode mode) {
  const std::string idx = std::to_string(stage);
  h = g_->conv2d(h, tensor(net + ".conv" + idx + ".w"), static_cast<int>(stride), 1);
  h = bn(h, net + ".bn" + idx, mode);
  return g_->leaky_relu(h, 0.2);
}

ad::Tensor Binder::body_16_to_512(ad::Tensor x, const std::string& net, ad::BnMode mode) {
  ad::Tensor h = conv_bn_lrelu(x, net, 1, 2, mode);  // 16 -> 8
  h = conv_bn_lrelu(h, net, 2, 2, mode);             // 8 -> 4
  h = conv_bn_lrelu(h, net, 3, 2, mode);             // 4 -> 2
  const std::int64_t rows = g_->shape_of(h)[0];
  return g_->reshape(h, {rows, 512});
}

namespace {

void expect_images(const ad::Graph& g, ad::Tensor x, const char* who) {
  const ad::Shape& s = g.shape_of(x);
  if (s.size() != 4 || s[1] != kImageChannels || s[2] != kImageSize || s[3] != kImageSize)
    fail(errc::shape, std::string(who) + ": expected [N,3,16,16] images, got " + ad::shape_str(s));
}

}  // namespace

ad::Tensor Binder::encode(ad::Tensor x, ad::BnMode mode) {
  expect_images(*g_, x, "encode");
  ad::Tensor h = body_16_to_512(x, "enc", mode);
  return g_->linear(h, tensor("enc.fc.w"), tensor("enc.fc.b"));
}

ad::Tensor Binder::decode(ad::Tensor f, ad::BnMode mode) {
  const ad::Shape& s = g_->shape_of(f);
  const std::int64_t nd = p_->cfg.feature_dim();
  if (s.size() != 2 || s[1] != nd)
    fail(errc::shape, "decode: expected [N," + std::to_string(nd) + "] features, got " +
                          ad::shape_str(s));
  ad::Tensor h = g_->matmul(f, tensor("dec.fc.w"));
  h = g_->reshape(h, {s[0], 128, 2, 2});
  h = g_->leaky_relu(bn(h, "dec.bn0", mode), 0.2);
  h = g_->upsample2x(h);  // 2 -> 4
  h = g_->leaky_relu(bn(g_->conv2d(h, tensor("dec.conv1.w"), 1, 1), "dec.bn1", mode), 0.2);
  h = g_->upsample2x(h);  // 4 -> 8
  h = g_->leaky_relu(bn(g_->conv2d(h, tensor("dec.conv2.w"), 1, 1), "dec.bn2", mode), 0.2);
  h = g_->upsample2x(h);  // 8 -> 16
  h = g_->bias_nchw(g_->conv2d(h, tensor("dec.conv3.w"), 1, 1), tensor("dec.conv3.b"));
  return g_->sigmoid(h);
}

ad::Tensor Binder::discriminate(ad::Tensor x, ad::BnMode mode) {
  expect_images(*g_, x, "discriminate");
  ad::Tensor h = body_16_to_512(x, "dsc", mode);
  return g_->sigmoid(g_->linear(h, tensor("dsc.fc.w"), tensor("dsc.fc.b")));
}

ad::Tensor Binder::classify(ad::Tensor x1, ad::Tensor x2, ad::Tensor x3, ad::BnMode mode) {
  expect_images(*g_, x1, "classify");
  expect_images(*g_, x2, "classify");
  expect_images(*g_, x3, "classify");
  const std::array<ad::Tensor, 3> xs{x1, x2, x3};
  ad::Tensor h = g_->concat_channels(xs);
  h = body_16_to_512(h, "cls", mode);
  return g_->sigmoid(g_->linear(h, tensor("cls.fc.w"), tensor("cls.fc.b")));
}

}  // namespace chunkmix::models

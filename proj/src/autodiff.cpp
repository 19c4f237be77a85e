#include "chunkmix/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "chunkmix/kernels.hpp"

namespace chunkmix::ad {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

const Shape& Tensor::shape() const { return g_->shape_of(*this); }
std::int64_t Tensor::numel() const { return ad::numel(shape()); }
std::span<const double> Tensor::values() const { return g_->values(*this); }
std::span<const double> Tensor::grad() const { return g_->grad(*this); }

double Tensor::scalar() const {
  if (numel() != 1) fail(errc::shape, "scalar() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

const Shape& Graph::shape_of(Tensor t) const {
  check_mine(t);
  return node(t).shape;
}

void Graph::check_mine(Tensor t) const {
  if (t.g_ != this || t.id_ < 0 || static_cast<size_t>(t.id_) >= nodes_.size())
    fail(errc::shape, "tensor does not belong to this graph");
}

void Graph::round_f32(std::vector<double>& buf) const {
  if (prec_ != Precision::f32) return;
  for (double& v : buf) v = static_cast<double>(static_cast<float>(v));
}

Tensor Graph::make(Shape shape, bool requires_grad) {
  Node n;
  n.shape = std::move(shape);
  const auto count = static_cast<size_t>(ad::numel(n.shape));
  n.val.resize(count);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad.assign(count, 0.0);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

std::span<const double> Graph::values(Tensor t) const {
  check_mine(t);
  return node(t).val;
}

std::span<const double> Graph::grad(Tensor t) const {
  check_mine(t);
  const Node& n = node(t);
  if (!n.requires_grad) fail(errc::shape, "grad() on non-differentiable tensor");
  return n.grad;
}

Tensor Graph::input(Shape shape, std::span<const double> vals) {
  if (static_cast<std::int64_t>(vals.size()) != ad::numel(shape))
    fail(errc::shape, "input data length " + std::to_string(vals.size()) +
                          " does not match shape " + shape_str(shape));
  Tensor t = make(std::move(shape), false);
  std::copy(vals.begin(), vals.end(), node(t).val.begin());
  round_f32(node(t).val);
  return t;
}

Tensor Graph::input(Shape shape, std::span<const float> vals) {
  if (static_cast<std::int64_t>(vals.size()) != ad::numel(shape))
    fail(errc::shape, "input data length " + std::to_string(vals.size()) +
                          " does not match shape " + shape_str(shape));
  Tensor t = make(std::move(shape), false);
  auto& v = node(t).val;
  for (size_t i = 0; i < vals.size(); ++i) v[i] = static_cast<double>(vals[i]);
  return t;
}

Tensor Graph::param(Shape shape, std::span<const double> vals) {
  if (static_cast<std::int64_t>(vals.size()) != ad::numel(shape))
    fail(errc::shape, "param data length " + std::to_string(vals.size()) +
                          " does not match shape " + shape_str(shape));
  Tensor t = make(std::move(shape), true);
  std::copy(vals.begin(), vals.end(), node(t).val.begin());
  round_f32(node(t).val);
  return t;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

static void check_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b)
    fail(errc::shape,
         std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Tensor Graph::add(Tensor a, Tensor b) {
  check_mine(a);
  check_mine(b);
  check_same_shape("add", node(a).shape, node(b).shape);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  const auto& bv = node(b).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, b](Graph& g) {
      const auto& og = g.node(out).grad;
      if (g.node(a).requires_grad) {
        auto& ag = g.node(a).grad;
        for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (g.node(b).requires_grad) {
        auto& bg = g.node(b).grad;
        for (size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
      }
    };
  return out;
}

Tensor Graph::sub(Tensor a, Tensor b) {
  check_mine(a);
  check_mine(b);
  check_same_shape("sub", node(a).shape, node(b).shape);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  const auto& bv = node(b).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, b](Graph& g) {
      const auto& og = g.node(out).grad;
      if (g.node(a).requires_grad) {
        auto& ag = g.node(a).grad;
        for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (g.node(b).requires_grad) {
        auto& bg = g.node(b).grad;
        for (size_t i = 0; i < og.size(); ++i) bg[i] -= og[i];
      }
    };
  return out;
}

Tensor Graph::mul(Tensor a, Tensor b) {
  check_mine(a);
  check_mine(b);
  check_same_shape("mul", node(a).shape, node(b).shape);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  const auto& bv = node(b).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, b](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& av = g.node(a).val;
      const auto& bv = g.node(b).val;
      if (g.node(a).requires_grad) {
        auto& ag = g.node(a).grad;
        for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * bv[i];
      }
      if (g.node(b).requires_grad) {
        auto& bg = g.node(b).grad;
        for (size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * av[i];
      }
    };
  return out;
}

Tensor Graph::add(Tensor a, double s) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + s;
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a](Graph& g) {
      const auto& og = g.node(out).grad;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
    };
  return out;
}

Tensor Graph::sub(Tensor a, double s) { return add(a, -s); }

Tensor Graph::sub(double s, Tensor a) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = s - av[i];
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a](Graph& g) {
      const auto& og = g.node(out).grad;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i) ag[i] -= og[i];
    };
  return out;
}

Tensor Graph::mul(Tensor a, double s) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, s](Graph& g) {
      const auto& og = g.node(out).grad;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * s;
    };
  return out;
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities
// ---------------------------------------------------------------------------

Tensor Graph::leaky_relu(Tensor a, double leak) {
  check_mine(a);
  if (leak < 0.0 || leak >= 1.0)
    fail(errc::config, "leaky_relu leak must be in [0,1), got " + std::to_string(leak));
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] >= 0.0 ? av[i] : leak * av[i];
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, leak](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& av = g.node(a).val;
      auto& ag = g.node(a).grad;
      // subgradient at 0 defined as 1
      for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * (av[i] >= 0.0 ? 1.0 : leak);
    };
  return out;
}

Tensor Graph::sigmoid(Tensor a) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  // keep outputs strictly inside (0,1) so downstream logs stay finite
  const double hi = std::nextafter(1.0, 0.0);
  const double lo = std::numeric_limits<double>::min();
  for (size_t i = 0; i < ov.size(); ++i) {
    const double x = av[i];
    double y;
    if (x >= 0.0) {
      y = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      y = e / (1.0 + e);
    }
    ov[i] = std::min(hi, std::max(lo, y));
  }
  round_f32(ov);
  if (prec_ == Precision::f32) {
    // the open-interval bounds must themselves be float-representable
    const double hi32 = static_cast<double>(std::nextafter(1.0f, 0.0f));
    const double lo32 = static_cast<double>(std::numeric_limits<float>::min());
    for (double& v : ov) v = std::min(hi32, std::max(lo32, v));
  }
  if (rg)
    node(out).backprop = [out, a](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& yv = g.node(out).val;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * yv[i] * (1.0 - yv[i]);
    };
  return out;
}

Tensor Graph::log(Tensor a) {
  check_mine(a);
  for (size_t i = 0; i < node(a).val.size(); ++i)
    if (!(node(a).val[i] > 0.0))
      fail(errc::numeric, "log of non-positive value " + std::to_string(node(a).val[i]) +
                              " at flat index " + std::to_string(i));
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& av = g.node(a).val;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i) ag[i] += og[i] / av[i];
    };
  return out;
}

Tensor Graph::clamp(Tensor a, double lo, double hi) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make(node(a).shape, rg);
  const auto& av = node(a).val;
  auto& ov = node(out).val;
  for (size_t i = 0; i < ov.size(); ++i) {
    const double x = av[i];
    if (x < lo || x > hi) ++clamp_events_;
    ov[i] = std::min(hi, std::max(lo, x));
  }
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, a, lo, hi](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& av = g.node(a).val;
      auto& ag = g.node(a).grad;
      for (size_t i = 0; i < og.size(); ++i)
        if (av[i] >= lo && av[i] <= hi) ag[i] += og[i];
    };
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor Graph::matmul(Tensor a, Tensor b) {
  check_mine(a);
  check_mine(b);
  const Shape& as = node(a).shape;
  const Shape& bs = node(b).shape;
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    fail(errc::shape, "matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  const std::int64_t m = as[0], k = as[1], n = bs[1];
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Tensor out = make({m, n}, rg);
  kern::matmul_nn(m, n, k, node(a).val.data(), node(b).val.data(), node(out).val.data(), false);
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, a, b, m, n, k](Graph& g) {
      const double* og = g.node(out).grad.data();
      if (g.node(a).requires_grad)  // dA = dC * B^T
        kern::matmul_nt(m, k, n, og, g.node(b).val.data(), g.node(a).grad.data(), true);
      if (g.node(b).requires_grad)  // dB = A^T * dC
        kern::matmul_tn(k, n, m, g.node(a).val.data(), og, g.node(b).grad.data(), true);
    };
  return out;
}

Tensor Graph::linear(Tensor x, Tensor w, Tensor b) {
  check_mine(x);
  check_mine(w);
  check_mine(b);
  const Shape& xs = node(x).shape;
  const Shape& ws = node(w).shape;
  const Shape& bs = node(b).shape;
  if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[1] || ws[0] != bs[0])
    fail(errc::shape, "linear: incompatible shapes x" + shape_str(xs) + " w" + shape_str(ws) +
                          " b" + shape_str(bs));
  const std::int64_t rows = xs[0], in = xs[1], out_dim = ws[0];
  const bool rg = node(x).requires_grad || node(w).requires_grad || node(b).requires_grad;
  Tensor out = make({rows, out_dim}, rg);
  // y = x * w^T + b
  kern::matmul_nt(rows, out_dim, in, node(x).val.data(), node(w).val.data(),
                  node(out).val.data(), false);
  {
    auto& ov = node(out).val;
    const auto& bv = node(b).val;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t o = 0; o < out_dim; ++o)
        ov[static_cast<size_t>(r * out_dim + o)] += bv[static_cast<size_t>(o)];
  }
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, x, w, b, rows, in, out_dim](Graph& g) {
      const double* og = g.node(out).grad.data();
      if (g.node(x).requires_grad)  // dx = dy * w
        kern::matmul_nn(rows, in, out_dim, og, g.node(w).val.data(), g.node(x).grad.data(), true);
      if (g.node(w).requires_grad)  // dw = dy^T * x
        kern::matmul_tn(out_dim, in, rows, og, g.node(x).val.data(), g.node(w).grad.data(), true);
      if (g.node(b).requires_grad) {
        auto& bg = g.node(b).grad;
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t o = 0; o < out_dim; ++o)
            bg[static_cast<size_t>(o)] += og[r * out_dim + o];
      }
    };
  return out;
}

Tensor Graph::conv2d(Tensor x, Tensor w, int stride, int pad) {
  check_mine(x);
  check_mine(w);
  const Shape& xs = node(x).shape;
  const Shape& ws = node(w).shape;
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3])
    fail(errc::shape, "conv2d: incompatible shapes x" + shape_str(xs) + " w" + shape_str(ws));
  const kern::ConvDims d =
      kern::conv_dims(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad);
  const bool rg = node(x).requires_grad || node(w).requires_grad;
  Tensor out = make({d.n, d.c_out, d.h_out, d.w_out}, rg);
  kern::conv2d_fwd(d, node(x).val.data(), node(w).val.data(), node(out).val.data());
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, x, w, d](Graph& g) {
      const double* og = g.node(out).grad.data();
      if (g.node(x).requires_grad) {
        std::vector<double> dx(g.node(x).val.size());
        kern::conv2d_bwd_input(d, og, g.node(w).val.data(), dx.data());
        auto& xg = g.node(x).grad;
        for (size_t i = 0; i < xg.size(); ++i) xg[i] += dx[i];
      }
      if (g.node(w).requires_grad) {
        std::vector<double> dw(g.node(w).val.size());
        kern::conv2d_bwd_kernel(d, og, g.node(x).val.data(), dw.data());
        auto& wg = g.node(w).grad;
        for (size_t i = 0; i < wg.size(); ++i) wg[i] += dw[i];
      }
    };
  return out;
}

Tensor Graph::bias_nchw(Tensor x, Tensor b) {
  check_mine(x);
  check_mine(b);
  const Shape& xs = node(x).shape;
  const Shape& bs = node(b).shape;
  if (xs.size() != 4 || bs.size() != 1 || bs[0] != xs[1])
    fail(errc::shape, "bias_nchw: shapes x" + shape_str(xs) + " b" + shape_str(bs));
  const std::int64_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  const bool rg = node(x).requires_grad || node(b).requires_grad;
  Tensor out = make(xs, rg);
  const auto& xv = node(x).val;
  const auto& bv = node(b).val;
  auto& ov = node(out).val;
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double bias = bv[static_cast<size_t>(ch)];
      const std::int64_t base = (s * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i)
        ov[static_cast<size_t>(base + i)] = xv[static_cast<size_t>(base + i)] + bias;
    }
  round_f32(ov);
  if (rg)
    node(out).backprop = [out, x, b, n, c, hw](Graph& g) {
      const auto& og = g.node(out).grad;
      if (g.node(x).requires_grad) {
        auto& xg = g.node(x).grad;
        for (size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
      }
      if (g.node(b).requires_grad) {
        auto& bg = g.node(b).grad;
        for (std::int64_t s = 0; s < n; ++s)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            const std::int64_t base = (s * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) acc += og[static_cast<size_t>(base + i)];
            bg[static_cast<size_t>(ch)] += acc;
          }
      }
    };
  return out;
}

Tensor Graph::upsample2x(Tensor x) {
  check_mine(x);
  const Shape& xs = node(x).shape;
  if (xs.size() != 4) fail(errc::shape, "upsample2x: expected NCHW, got " + shape_str(xs));
  const std::int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const bool rg = node(x).requires_grad;
  Tensor out = make({n, c, 2 * h, 2 * w}, rg);
  kern::upsample2x_fwd(n, c, h, w, node(x).val.data(), node(out).val.data());
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, x, n, c, h, w](Graph& g) {
      std::vector<double> dx(g.node(x).val.size());
      kern::upsample2x_bwd(n, c, h, w, g.node(out).grad.data(), dx.data());
      auto& xg = g.node(x).grad;
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += dx[i];
    };
  return out;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

Tensor Graph::batchnorm(Tensor x, Tensor gamma, Tensor beta, std::span<double> running_mean,
                        std::span<double> running_var, double momentum, BnMode mode) {
  check_mine(x);
  check_mine(gamma);
  check_mine(beta);
  const Shape& xs = node(x).shape;
  if (xs.size() != 4) fail(errc::shape, "batchnorm: expected NCHW, got " + shape_str(xs));
  const std::int64_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (node(gamma).shape != Shape{c} || node(beta).shape != Shape{c} ||
      static_cast<std::int64_t>(running_mean.size()) != c ||
      static_cast<std::int64_t>(running_var.size()) != c)
    fail(errc::shape, "batchnorm: per-channel parameter extent mismatch for " + shape_str(xs));
  if (mode == BnMode::train && n < 2)
    fail(errc::shape, "batchnorm: train mode needs batch >= 2, got " + std::to_string(n));

  constexpr double eps = 1e-5;
  const std::int64_t m = n * hw;
  const bool rg =
      node(x).requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
  Tensor out = make(xs, rg);

  // per-channel statistics: batch stats in train mode, running stats in infer
  auto mean_v = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
  auto inv_v = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
  const auto& xv = node(x).val;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == BnMode::train) {
      double acc = 0.0;
      for (std::int64_t s = 0; s < n; ++s) {
        const std::int64_t base = (s * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += xv[static_cast<size_t>(base + i)];
      }
      mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (std::int64_t s = 0; s < n; ++s) {
        const std::int64_t base = (s * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double dv = xv[static_cast<size_t>(base + i)] - mu;
          vacc += dv * dv;
        }
      }
      var = vacc / static_cast<double>(m);  // biased, matches the normalization below
      double rm = momentum * running_mean[static_cast<size_t>(ch)] + (1.0 - momentum) * mu;
      double rv = momentum * running_var[static_cast<size_t>(ch)] + (1.0 - momentum) * var;
      if (prec_ == Precision::f32) {
        // persistent statistics stay on the 32-bit grid like every op result
        rm = static_cast<double>(static_cast<float>(rm));
        rv = static_cast<double>(static_cast<float>(rv));
      }
      running_mean[static_cast<size_t>(ch)] = rm;
      running_var[static_cast<size_t>(ch)] = rv;
    } else {
      mu = running_mean[static_cast<size_t>(ch)];
      var = running_var[static_cast<size_t>(ch)];
    }
    (*mean_v)[static_cast<size_t>(ch)] = mu;
    (*inv_v)[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + eps);
  }

  auto& ov = node(out).val;
  const auto& gv = node(gamma).val;
  const auto& bv = node(beta).val;
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double mu = (*mean_v)[static_cast<size_t>(ch)];
      const double inv = (*inv_v)[static_cast<size_t>(ch)];
      const double ga = gv[static_cast<size_t>(ch)];
      const double be = bv[static_cast<size_t>(ch)];
      const std::int64_t base = (s * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i)
        ov[static_cast<size_t>(base + i)] =
            ga * ((xv[static_cast<size_t>(base + i)] - mu) * inv) + be;
    }
  round_f32(ov);

  if (rg)
    node(out).backprop = [out, x, gamma, beta, mean_v, inv_v, n, c, hw, m, mode](Graph& g) {
      const auto& og = g.node(out).grad;
      const auto& xv = g.node(x).val;
      const auto& gv = g.node(gamma).val;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double mu = (*mean_v)[static_cast<size_t>(ch)];
        const double inv = (*inv_v)[static_cast<size_t>(ch)];
        const double ga = gv[static_cast<size_t>(ch)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t s = 0; s < n; ++s) {
          const std::int64_t base = (s * c + ch) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            const double dy = og[static_cast<size_t>(base + i)];
            const double xhat = (xv[static_cast<size_t>(base + i)] - mu) * inv;
            sum_dy += dy;
            sum_dy_xhat += dy * xhat;
          }
        }
        if (g.node(beta).requires_grad) g.node(beta).grad[static_cast<size_t>(ch)] += sum_dy;
        if (g.node(gamma).requires_grad)
          g.node(gamma).grad[static_cast<size_t>(ch)] += sum_dy_xhat;
        if (g.node(x).requires_grad) {
          auto& xg = g.node(x).grad;
          if (mode == BnMode::train) {
            // in train mode the batch statistics depend on x, so the mean and
            // variance paths feed back into dx
            const double mean_dy = sum_dy / static_cast<double>(m);
            const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
            for (std::int64_t s = 0; s < n; ++s) {
              const std::int64_t base = (s * c + ch) * hw;
              for (std::int64_t i = 0; i < hw; ++i) {
                const double dy = og[static_cast<size_t>(base + i)];
                const double xhat = (xv[static_cast<size_t>(base + i)] - mu) * inv;
                xg[static_cast<size_t>(base + i)] +=
                    ga * inv * (dy - mean_dy - xhat * mean_dy_xhat);
              }
            }
          } else {
            for (std::int64_t s = 0; s < n; ++s) {
              const std::int64_t base = (s * c + ch) * hw;
              for (std::int64_t i = 0; i < hw; ++i)
                xg[static_cast<size_t>(base + i)] += og[static_cast<size_t>(base + i)] * ga * inv;
            }
          }
        }
      }
    };
  return out;
}

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

Tensor Graph::concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) fail(errc::shape, "concat_channels: empty input list");
  for (const Tensor& t : xs) check_mine(t);
  const Shape& s0 = node(xs[0]).shape;
  if (s0.size() != 4) fail(errc::shape, "concat_channels: expected NCHW, got " + shape_str(s0));
  std::int64_t c_total = 0;
  bool rg = false;
  for (const Tensor& t : xs) {
    const Shape& s = node(t).shape;
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
      fail(errc::shape,
           "concat_channels: mismatched extents " + shape_str(s0) + " vs " + shape_str(s));
    c_total += s[1];
    rg = rg || node(t).requires_grad;
  }
  const std::int64_t n = s0[0], hw = s0[2] * s0[3];
  Tensor out = make({n, c_total, s0[2], s0[3]}, rg);
  auto& ov = node(out).val;
  std::int64_t c_off = 0;
  for (const Tensor& t : xs) {
    const auto& tv = node(t).val;
    const std::int64_t c = node(t).shape[1];
    for (std::int64_t s = 0; s < n; ++s)
      std::memcpy(ov.data() + ((s * c_total + c_off) * hw), tv.data() + (s * c * hw),
                  sizeof(double) * static_cast<size_t>(c * hw));
    c_off += c;
  }
  if (rg) {
    std::vector<Tensor> parts(xs.begin(), xs.end());
    node(out).backprop = [out, parts, n, c_total, hw](Graph& g) {
      const auto& og = g.node(out).grad;
      std::int64_t c_off = 0;
      for (const Tensor& t : parts) {
        const std::int64_t c = g.node(t).shape[1];
        if (g.node(t).requires_grad) {
          auto& tg = g.node(t).grad;
          for (std::int64_t s = 0; s < n; ++s) {
            const double* src = og.data() + ((s * c_total + c_off) * hw);
            double* dst = tg.data() + (s * c * hw);
            for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
          }
        }
        c_off += c;
      }
    };
  }
  return out;
}

Tensor Graph::reshape(Tensor x, Shape shape) {
  check_mine(x);
  if (ad::numel(shape) != ad::numel(node(x).shape))
    fail(errc::shape, "reshape: element count mismatch " + shape_str(node(x).shape) + " -> " +
                          shape_str(shape));
  const bool rg = node(x).requires_grad;
  Tensor out = make(std::move(shape), rg);
  node(out).val = node(x).val;
  if (rg)
    node(out).backprop = [out, x](Graph& g) {
      const auto& og = g.node(out).grad;
      auto& xg = g.node(x).grad;
      for (size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
    };
  return out;
}

Tensor Graph::mean(Tensor a) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  const std::int64_t count = ad::numel(node(a).shape);
  Tensor out = make({1}, rg);
  double acc = 0.0;
  for (double v : node(a).val) acc += v;
  node(out).val[0] = acc / static_cast<double>(count);
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, a, count](Graph& g) {
      const double go = g.node(out).grad[0] / static_cast<double>(count);
      auto& ag = g.node(a).grad;
      for (double& v : ag) v += go;
    };
  return out;
}

Tensor Graph::sum(Tensor a) {
  check_mine(a);
  const bool rg = node(a).requires_grad;
  Tensor out = make({1}, rg);
  double acc = 0.0;
  for (double v : node(a).val) acc += v;
  node(out).val[0] = acc;
  round_f32(node(out).val);
  if (rg)
    node(out).backprop = [out, a](Graph& g) {
      const double go = g.node(out).grad[0];
      auto& ag = g.node(a).grad;
      for (double& v : ag) v += go;
    };
  return out;
}

Tensor Graph::mask_mix(Tensor a, Tensor b,
                       std::shared_ptr<const std::vector<std::uint8_t>> bits,
                       std::int64_t n_chunks, std::int64_t chunk_dim) {
  check_mine(a);
  check_mine(b);
  const Shape& as = node(a).shape;
  check_same_shape("mask_mix", as, node(b).shape);
  if (as.size() != 2 || as[1] != n_chunks * chunk_dim)
    fail(errc::shape, "mask_mix: features " + shape_str(as) + " incompatible with " +
                          std::to_string(n_chunks) + " chunks of " + std::to_string(chunk_dim));
  const std::int64_t rows = as[0];
  if (static_cast<std::int64_t>(bits->size()) != rows * n_chunks)
    fail(errc::shape, "mask_mix: mask count " + std::to_string(bits->size()) +
                          " does not match rows*chunks");
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  Tensor out = make(as, rg);
  const auto& av = node(a).val;
  const auto& bv = node(b).val;
  auto& ov = node(out).val;
  // exact per-chunk copies: no arithmetic touches the selected values
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t i = 0; i < n_chunks; ++i) {
      const bool from_a = (*bits)[static_cast<size_t>(r * n_chunks + i)] != 0;
      const std::int64_t base = r * n_chunks * chunk_dim + i * chunk_dim;
      const auto& src = from_a ? av : bv;
      std::memcpy(ov.data() + base, src.data() + base,
                  sizeof(double) * static_cast<size_t>(chunk_dim));
    }
  if (rg)
    node(out).backprop = [out, a, b, bits, rows, n_chunks, chunk_dim](Graph& g) {
      const auto& og = g.node(out).grad;
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < n_chunks; ++i) {
          const bool from_a = (*bits)[static_cast<size_t>(r * n_chunks + i)] != 0;
          const Tensor dst = from_a ? a : b;
          if (!g.node(dst).requires_grad) continue;
          auto& dg = g.node(dst).grad;
          const std::int64_t base = r * n_chunks * chunk_dim + i * chunk_dim;
          for (std::int64_t j = 0; j < chunk_dim; ++j)
            dg[static_cast<size_t>(base + j)] += og[static_cast<size_t>(base + j)];
        }
    };
  return out;
}

Tensor Graph::detach(Tensor a) {
  check_mine(a);
  Tensor out = make(node(a).shape, false);
  node(out).val = node(a).val;
  return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void Graph::backward(Tensor loss) {
  check_mine(loss);
  if (ad::numel(node(loss).shape) != 1)
    fail(errc::shape, "backward: loss must be scalar, got shape " + shape_str(node(loss).shape));
  if (!node(loss).requires_grad)
    fail(errc::shape, "backward: loss does not depend on any differentiable leaf");
  // interior grads are per-walk scratch; only leaves accumulate across calls
  for (int i = 0; i <= loss.id_; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.backprop) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  node(loss).grad[0] += 1.0;
  for (int i = loss.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad) continue;
    round_f32(n.grad);  // grad is fully accumulated once the walk reaches the node
    if (!n.backprop) continue;
    // every backprop is linear in the upstream grad, so an all-zero grad
    // contributes exactly nothing; skipping it lets later losses on the same
    // tape ignore subtrees that only feed earlier losses
    bool live = false;
    for (double gv : n.grad)
      if (gv != 0.0) {
        live = true;
        break;
      }
    if (live) n.backprop(*this);
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_)
    if (n.requires_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(Graph&, Tensor)>& f, const Shape& shape,
                  std::span<const double> x0, double h, Precision prec) {
  if (h <= 0.0) fail(errc::config, "grad_check: h must be positive");
  std::vector<double> x(x0.begin(), x0.end());

  Graph g(prec);
  Tensor xt = g.param(shape, x);
  Tensor loss = f(g, xt);
  if (loss.numel() != 1) fail(errc::shape, "grad_check: builder must produce a scalar");
  g.backward(loss);
  std::vector<double> analytic(xt.grad().begin(), xt.grad().end());

  auto eval = [&](const std::vector<double>& xv) {
    Graph gg(prec);
    Tensor t = gg.input(shape, std::span<const double>(xv));
    return f(gg, t).scalar();
  };

  double max_err = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = eval(x);
    x[i] = saved - h;
    const double fm = eval(x);
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

// ---------------------------------------------------------------------------
// per-op gradient suite
// ---------------------------------------------------------------------------

namespace {

// nudge values away from the leaky_relu kink
void away_from_zero(std::vector<double>& v, double margin = 1e-2) {
  for (double& x : v)
    if (std::abs(x) < margin) x = x < 0.0 ? -margin : margin;
}

std::vector<double> random_vec(Rng& rng, std::int64_t n, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// differentiable view of `count` consecutive entries starting at `off` of a
// packed [1,total] row, produced by a constant gather matrix
Tensor gather(Graph& g, Tensor row, std::int64_t total, std::int64_t off, std::int64_t count,
              Shape shape) {
  std::vector<double> sel(static_cast<size_t>(total * count), 0.0);
  for (std::int64_t i = 0; i < count; ++i) sel[static_cast<size_t>((off + i) * count + i)] = 1.0;
  Tensor m = g.matmul(row, g.input({total, count}, std::span<const double>(sel)));
  return g.reshape(m, std::move(shape));
}

}  // namespace

std::vector<OpCheck> gradcheck_all_ops(int seeds, Precision prec) {
  std::vector<OpCheck> results;
  // the step must sit well above the rounding granularity of the active
  // precision or the symmetric difference collapses into quantization noise;
  // it must also stay inside the 1e-2 margin that keeps leaky_relu probes
  // away from the kink
  const double h = prec == Precision::f32 ? 4e-3 : 1e-5;
  auto run = [&](const std::string& name, const Shape& shape,
                 const std::function<std::vector<double>(Rng&)>& make_x,
                 const std::function<Tensor(Graph&, Tensor)>& f) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(mix_seed(0x67e6c13b, static_cast<std::uint64_t>(s)));
      std::vector<double> x0 = make_x(rng);
      std::function<Tensor(Graph&, Tensor)> fn = f;
      if (prec == Precision::f32) {
        // In 32-bit mode the finite-difference signal h·|dL/dx_i| has to clear
        // the rounding jitter of the loss value (~1e-6 absolute). Coordinates
        // with small gradients — mean reductions divide by element count, and
        // path sums can cancel — would compare noise against noise. Adding a
        // steep linear term lifts every coordinate above that floor without
        // introducing truncation error (it is exact under central
        // differences); its slopes copy the sign of the op's own gradient at
        // x0 so the two contributions can never cancel each other.
        Graph g0(prec);
        Tensor xt = g0.param(shape, std::span<const double>(x0));
        g0.backward(f(g0, xt));
        auto slope = std::make_shared<std::vector<double>>(xt.grad().begin(), xt.grad().end());
        for (double& b : *slope) b = std::copysign(12.0, b);
        Shape sh = shape;
        fn = [f, slope, sh](Graph& g, Tensor x) {
          Tensor c = g.input(sh, std::span<const double>(*slope));
          return g.add(f(g, x), g.mean(g.mul(x, c)));
        };
      }
      worst = std::max(worst, grad_check(fn, shape, x0, h, prec));
    }
    results.push_back({name, worst});
  };

  auto plain = [](Rng& r, std::int64_t n) {
    auto v = random_vec(r, n);
    away_from_zero(v);
    return v;
  };

  // binary elementwise ops: one packed leaf carries both operands
  auto run_binary = [&](const std::string& name,
                        const std::function<Tensor(Graph&, Tensor, Tensor)>& op) {
    run(name, {1, 10}, [&](Rng& r) { return plain(r, 10); },
        [op](Graph& g, Tensor x) {
          Tensor a = gather(g, x, 10, 0, 5, {1, 5});
          Tensor b = gather(g, x, 10, 5, 5, {1, 5});
          Tensor y = op(g, a, b);
          return g.mean(g.mul(y, y));
        });
  };
  run_binary("add", [](Graph& g, Tensor a, Tensor b) { return g.add(a, b); });
  run_binary("sub", [](Graph& g, Tensor a, Tensor b) { return g.sub(a, b); });
  run_binary("mul", [](Graph& g, Tensor a, Tensor b) { return g.mul(a, b); });

  run("add_scalar", {7}, [&](Rng& r) { return plain(r, 7); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.add(x, 0.7), g.add(x, 0.7))); });
  run("sub_scalar", {7}, [&](Rng& r) { return plain(r, 7); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.sub(x, 0.4), x)); });
  run("sub_scalar_rev", {7}, [&](Rng& r) { return plain(r, 7); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.sub(2.0, x), g.sub(2.0, x))); });
  run("mul_scalar", {7}, [&](Rng& r) { return plain(r, 7); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.mul(x, -1.3), x)); });

  run("leaky_relu", {9}, [&](Rng& r) { return plain(r, 9); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.leaky_relu(x, 0.2), x)); });
  run("sigmoid", {9}, [&](Rng& r) { return random_vec(r, 9); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.sigmoid(x), g.sigmoid(x))); });
  run("log", {9},
      [&](Rng& r) {
        auto v = random_vec(r, 9);
        for (double& x : v) x = 0.5 + std::abs(x);
        return v;
      },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.log(x), x)); });
  run("clamp", {9},
      [&](Rng& r) {
        auto v = random_vec(r, 9, 2.0);
        for (double& x : v)  // keep inputs away from the clamp boundaries
          if (std::abs(std::abs(x) - 1.5) < 0.01) x += x > 0.0 ? 0.05 : -0.05;
        return v;
      },
      [](Graph& g, Tensor x) { return g.mean(g.mul(g.clamp(x, -1.5, 1.5), x)); });

  run("matmul", {1, 20}, [&](Rng& r) { return plain(r, 20); },
      [](Graph& g, Tensor x) {
        Tensor a = gather(g, x, 20, 0, 12, {3, 4});
        Tensor b = gather(g, x, 20, 12, 8, {4, 2});
        Tensor y = g.matmul(a, b);
        return g.mean(g.mul(y, y));
      });
  run("linear", {1, 22}, [&](Rng& r) { return plain(r, 22); },
      [](Graph& g, Tensor x) {
        Tensor xin = gather(g, x, 22, 0, 12, {3, 4});
        Tensor w = gather(g, x, 22, 12, 8, {2, 4});
        Tensor b = gather(g, x, 22, 20, 2, {2});
        Tensor y = g.linear(xin, w, b);
        return g.mean(g.mul(y, y));
      });
  // conv check at the documented probe size: 1×2×5×5 input, 3×2×3×3 kernel
  run("conv2d", {1, 104}, [&](Rng& r) { return plain(r, 104); },
      [](Graph& g, Tensor packed) {
        Tensor x = gather(g, packed, 104, 0, 50, {1, 2, 5, 5});
        Tensor w = gather(g, packed, 104, 50, 54, {3, 2, 3, 3});
        Tensor y = g.conv2d(x, w, 1, 1);
        return g.mean(g.mul(y, y));
      });
  run("bias_nchw", {1, 27}, [&](Rng& r) { return plain(r, 27); },
      [](Graph& g, Tensor packed) {
        Tensor x = gather(g, packed, 27, 0, 24, {2, 3, 2, 2});
        Tensor b = gather(g, packed, 27, 24, 3, {3});
        Tensor y = g.bias_nchw(x, b);
        return g.mean(g.mul(y, y));
      });
  run("upsample2x", {18}, [&](Rng& r) { return plain(r, 18); },
      [](Graph& g, Tensor x) {
        Tensor y = g.upsample2x(g.reshape(x, {1, 2, 3, 3}));
        return g.mean(g.mul(y, y));
      });

  run("batchnorm_x", {72}, [&](Rng& r) { return plain(r, 72); },
      [](Graph& g, Tensor x) {
        const std::vector<double> ga = {1.3, 0.7}, be = {0.1, -0.2};
        std::vector<double> rm(2, 0.0), rv(2, 1.0);
        Tensor gam = g.input({2}, std::span<const double>(ga));
        Tensor bet = g.input({2}, std::span<const double>(be));
        Tensor y = g.batchnorm(g.reshape(x, {4, 2, 3, 3}), gam, bet, rm, rv, 0.9, BnMode::train);
        // reduce with fixed random weights: a mean of y*y is nearly invariant
        // to x here (standardization cancels it to O(eps)), which would leave
        // the checker comparing finite-difference noise against zero.
        Rng fixed(777);
        std::vector<double> cv(72);
        for (double& v : cv) v = fixed.normal();
        Tensor c = g.input({4, 2, 3, 3}, std::span<const double>(cv));
        return g.mean(g.mul(y, c));
      });
  run("batchnorm_params", {1, 4},
      [&](Rng& r) {
        auto v = plain(r, 4);
        v[0] = 0.5 + std::abs(v[0]);  // keep the scales comfortably positive
        v[1] = 0.5 + std::abs(v[1]);
        return v;
      },
      [](Graph& g, Tensor packed) {
        Rng fixed(1234);
        std::vector<double> xv(72);
        for (double& v : xv) v = fixed.normal();
        Tensor x = g.input({4, 2, 3, 3}, std::span<const double>(xv));
        std::vector<double> rm(2, 0.0), rv(2, 1.0);
        Tensor gam = gather(g, packed, 4, 0, 2, {2});
        Tensor bet = gather(g, packed, 4, 2, 2, {2});
        Tensor y = g.batchnorm(x, gam, bet, rm, rv, 0.9, BnMode::train);
        return g.mean(g.mul(y, y));
      });
  run("batchnorm_infer", {72}, [&](Rng& r) { return plain(r, 72); },
      [](Graph& g, Tensor x) {
        const std::vector<double> ga = {1.3, 0.7}, be = {0.1, -0.2};
        std::vector<double> rm = {0.2, -0.1}, rv = {1.5, 0.8};
        Tensor gam = g.input({2}, std::span<const double>(ga));
        Tensor bet = g.input({2}, std::span<const double>(be));
        Tensor y = g.batchnorm(g.reshape(x, {4, 2, 3, 3}), gam, bet, rm, rv, 0.9, BnMode::infer);
        return g.mean(g.mul(y, y));
      });

  run("concat_channels", {1, 24}, [&](Rng& r) { return plain(r, 24); },
      [](Graph& g, Tensor packed) {
        Tensor a = gather(g, packed, 24, 0, 16, {2, 2, 2, 2});
        Tensor b = gather(g, packed, 24, 16, 8, {2, 1, 2, 2});
        Tensor y = g.concat_channels(std::array<Tensor, 2>{a, b});
        return g.mean(g.mul(y, y));
      });
  run("reshape", {12}, [&](Rng& r) { return plain(r, 12); },
      [](Graph& g, Tensor x) {
        Tensor y = g.reshape(x, {3, 4});
        return g.mean(g.mul(y, y));
      });
  run("mean", {11}, [&](Rng& r) { return plain(r, 11); },
      [](Graph& g, Tensor x) { return g.mean(g.mul(x, x)); });
  run("sum", {11}, [&](Rng& r) { return plain(r, 11); },
      [](Graph& g, Tensor x) { return g.sum(g.mul(x, x)); });
  run("mask_mix", {1, 24}, [&](Rng& r) { return plain(r, 24); },
      [](Graph& g, Tensor packed) {
        Tensor a = gather(g, packed, 24, 0, 12, {2, 6});
        Tensor b = gather(g, packed, 24, 12, 12, {2, 6});
        auto bits = std::make_shared<std::vector<std::uint8_t>>(
            std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1});
        Tensor y = g.mask_mix(a, b, bits, 3, 2);
        return g.mean(g.mul(y, y));
      });

  // composite: conv → batchnorm → leaky_relu → mean. The normalized
  // pre-activations must stay bounded away from the leaky_relu kink for the
  // finite-difference oracle to be valid (the step h can shift them), so
  // candidates that land a pre-activation within 0.02 of zero are redrawn.
  {
    auto pre_activations = [](Graph& g, Tensor packed) {
      Tensor x = gather(g, packed, 118, 0, 64, {2, 2, 4, 4});
      Tensor w = gather(g, packed, 118, 64, 54, {3, 2, 3, 3});
      Tensor y = g.conv2d(x, w, 1, 1);
      const std::vector<double> ga = {1.1, 0.9, 1.05}, be = {0.05, -0.1, 0.0};
      std::vector<double> rm(3, 0.0), rv(3, 1.0);
      Tensor gam = g.input({3}, std::span<const double>(ga));
      Tensor bet = g.input({3}, std::span<const double>(be));
      return g.batchnorm(y, gam, bet, rm, rv, 0.9, BnMode::train);
    };
    run("composite_conv_bn_lrelu_mean", {1, 118},
        [&](Rng& r) {
          for (;;) {
            auto v = plain(r, 118);
            Graph probe;
            Tensor z = pre_activations(probe, probe.input({1, 118}, std::span<const double>(v)));
            double closest = std::numeric_limits<double>::infinity();
            for (double zv : z.values()) closest = std::min(closest, std::abs(zv));
            if (closest > 2e-2) return v;
          }
        },
        [pre_activations](Graph& g, Tensor packed) {
          return g.mean(g.leaky_relu(pre_activations(g, packed), 0.2));
        });
  }

  return results;
}

}  // namespace chunkmix::ad

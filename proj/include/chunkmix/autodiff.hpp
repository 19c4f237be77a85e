#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "chunkmix/common.hpp"

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Graph is a tape: operations append nodes in topological order and
// backward() walks the tape once in reverse. Tensor is a cheap handle into
// the tape. Values are stored as doubles; in f32 mode every op result (and
// every fully-accumulated gradient) is rounded through float, which emulates
// single precision compute with double accumulators.

namespace chunkmix::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Precision { f64, f32 };
enum class BnMode { train, infer };

class Graph;

class Tensor {
 public:
  Tensor() = default;
  bool defined() const { return g_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const;
  std::span<const double> values() const;
  std::span<const double> grad() const;
  double scalar() const;  // value of a one-element tensor
  int id() const { return id_; }

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  explicit Graph(Precision prec = Precision::f64) : prec_(prec) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Precision precision() const { return prec_; }
  std::size_t size() const { return nodes_.size(); }
  // times a clamp() actually clipped a value; used as the loss_cls warning counter
  std::int64_t clamp_events() const { return clamp_events_; }

  // leaves
  Tensor input(Shape shape, std::span<const double> vals);
  Tensor input(Shape shape, std::span<const float> vals);
  Tensor param(Shape shape, std::span<const double> vals);

  // elementwise; tensor-tensor requires equal shapes, scalar overloads broadcast
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor add(Tensor a, double s);
  Tensor sub(Tensor a, double s);
  Tensor sub(double s, Tensor a);
  Tensor mul(Tensor a, double s);

  Tensor leaky_relu(Tensor a, double leak);
  Tensor sigmoid(Tensor a);
  Tensor log(Tensor a);
  Tensor clamp(Tensor a, double lo, double hi);

  Tensor matmul(Tensor a, Tensor b);                 // [m,k]x[k,n]
  Tensor linear(Tensor x, Tensor w, Tensor b);       // x:[rows,in] w:[out,in] b:[out]
  Tensor conv2d(Tensor x, Tensor w, int stride, int pad);
  Tensor bias_nchw(Tensor x, Tensor b);
  Tensor upsample2x(Tensor x);
  Tensor batchnorm(Tensor x, Tensor gamma, Tensor beta, std::span<double> running_mean,
                   std::span<double> running_var, double momentum, BnMode mode);
  Tensor concat_channels(std::span<const Tensor> xs);
  Tensor reshape(Tensor x, Shape shape);
  Tensor mean(Tensor a);
  Tensor sum(Tensor a);
  // rows x (n*d) chunk selection: out chunk i of row r comes from a when
  // bits[r*n + i] == 1, from b otherwise; exact copies, no arithmetic
  Tensor mask_mix(Tensor a, Tensor b, std::shared_ptr<const std::vector<std::uint8_t>> bits,
                  std::int64_t n_chunks, std::int64_t chunk_dim);
  Tensor detach(Tensor a);

  void backward(Tensor loss);
  void zero_grad();

  std::span<const double> values(Tensor t) const;
  std::span<const double> grad(Tensor t) const;
  const Shape& shape_of(Tensor t) const;

 private:
  struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::function<void(Graph&)> backprop;  // absent for leaves
  };

  Tensor make(Shape shape, bool requires_grad);
  Node& node(Tensor t) { return nodes_[static_cast<size_t>(t.id_)]; }
  const Node& node(Tensor t) const { return nodes_[static_cast<size_t>(t.id_)]; }
  void check_mine(Tensor t) const;
  void round_f32(std::vector<double>& buf) const;

  // deque keeps node references stable while the tape grows
  std::deque<Node> nodes_;
  Precision prec_;
  std::int64_t clamp_events_ = 0;
};

// Central finite-difference gradient check for a scalar-valued graph builder.
// Returns max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor(Graph&, Tensor)>& f, const Shape& shape,
                  std::span<const double> x0, double h = 1e-5,
                  Precision prec = Precision::f64);

// Named gradient checks over every registered op (the `gradcheck` CLI suite).
struct OpCheck {
  std::string name;
  double max_rel_err;
};
std::vector<OpCheck> gradcheck_all_ops(int seeds, Precision prec);

}  // namespace chunkmix::ad

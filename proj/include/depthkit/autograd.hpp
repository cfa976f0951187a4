#pragma once

// Reverse-mode differentiation over N x C x H x W tensors, restricted to the
// layer set the depth network needs. Every op records a node on a Graph tape;
// Graph::backward walks the tape in reverse and accumulates adjoints.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace depthkit {

#ifdef DEPTHKIT_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0);
  Tensor(Shape shape, std::vector<Scalar> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& values() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }
  Scalar& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  Scalar at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + static_cast<std::size_t>(c)) * shape_.h +
            static_cast<std::size_t>(h)) * shape_.w + static_cast<std::size_t>(w);
  }

  void fill(Scalar v);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

/// For each pooled output element, the flat index (into the full input
/// tensor) of the maximum in its window. Ties go to the lowest index.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::int64_t> index;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  Var constant(Tensor value);
  // The node reads the parameter value; backward adds into parameter.grad.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  // Adjoint after backward; zero tensor when the node received none.
  Tensor grad(Var v) const;
  const std::string& kind(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).kind; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss);

  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;
  // Used by op implementations; inputs must already be on this tape.
  Var record(std::string kind, std::vector<Var> inputs, Tensor value, BackwardFn fn);
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  // Adjoint buffer of an input, allocated on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    std::string kind;
    std::vector<Var> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// --- layers ---------------------------------------------------------------

// x: N x Cin x H x W, w: Cout x Cin x K x K, b: Cout (as 1 x Cout x 1 x 1) or none.
Var conv2d(Graph& g, Var x, Var w, std::optional<Var> b, int stride, int pad);
// x: N x Cin x H x W, w: Cin x Cout x K x K; output (H-1)*stride + K.
Var transpose_conv2d(Graph& g, Var x, Var w, std::optional<Var> b, int stride);
Var relu(Graph& g, Var x);

struct PoolResult {
  Var out;
  PoolIndices indices;
};
PoolResult maxpool2d(Graph& g, Var x, int kernel = 2, int stride = 2);
Var max_unpool2d(Graph& g, Var x, const PoolIndices& idx, Shape out_shape);

Var add(Graph& g, Var x, Var y);
Var concat_channels(Graph& g, Var x, Var y);
Var scale(Graph& g, Var x, Scalar s);
Var sum(Graph& g, Var x);
Var mean(Graph& g, Var x);

// Channels [dx_0..dx_{C-1}, dy_0..dy_{C-1}] of forward differences; the last
// column of dx and the last row of dy are 0.
Var spatial_gradient(Graph& g, Var x);
// Per-pixel (d_xx)^2 + (d_yy)^2, zero on the 1-pixel border.
Var laplacian_energy(Graph& g, Var x);

enum class DistanceKind { L1, L2, Huber, AdaptiveHuber, RHuber };

struct Distance {
  DistanceKind kind = DistanceKind::L1;
  double delta = 1.0;  // Huber threshold
};

std::string to_string(DistanceKind k);
DistanceKind distance_kind_from_string(const std::string& s);

// Mean penalty of e = a - b over elements where mask != 0.
//   L1 |e|; L2 e^2; Huber 1/2 e^2 (|e| <= delta) else delta (|e| - delta/2);
//   AdaptiveHuber: Huber with delta = median |e|;
//   RHuber (berHu): |e| (|e| <= c) else (e^2 + c^2) / (2c), c = 0.2 max |e|.
// The adaptive thresholds are differentiated through (they select elements).
Var distance(Graph& g, const Distance& d, Var a, Var b, const Tensor& mask);

// --- gradient checking and optimizers -------------------------------------

struct GradCheckOptions {
  double eps = 1e-5;
  // Check at most this many elements per parameter (evenly strided); 0 = all.
  std::size_t max_elements_per_param = 0;
};

// Max relative error between backward and central differences, with
// denominator max(|a|, |b|, 1e-8).
double grad_check(const std::function<Var(Graph&)>& build, std::span<Parameter* const> params,
                  const GradCheckOptions& opts = {});

void zero_grad(std::span<Parameter* const> params);

void sgd_step(std::span<Parameter* const> params, double lr, double weight_decay = 0.0);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Adam with decoupled weight decay.
void adam_step(AdamState& state, std::span<Parameter* const> params, double lr, double weight_decay = 0.0);

}  // namespace depthkit

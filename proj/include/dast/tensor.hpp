// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copying it aliases the same buffer. Operations
// always allocate a fresh output. When a Graph is active on the calling thread
// (see GraphScope) and at least one input requires a gradient, the operation
// appends a record to that graph; Graph::backward replays the records in
// reverse order, which is a valid reverse topological order because records
// are appended in execution order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dast {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  double& operator[](std::size_t i) { return data()[i]; }
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t c, std::size_t y, std::size_t x) const;
  double& at(std::size_t c, std::size_t y, std::size_t x);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  Tensor grad_tensor() const;
  void zero_grad();

  // Deep copy with no gradient tracking.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Graph;
  friend Tensor record(std::string_view, Tensor, std::initializer_list<Tensor>,
                       std::function<void(std::span<const double>)>);
  friend std::span<double> grad_sink(const Tensor&);
};

bool equal_exact(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Reverse-mode tape. One graph per forward pass; single-threaded.
class Graph {
 public:
  struct Record {
    std::string op;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void(std::span<const double>)> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const Record& record_at(std::size_t i) const { return records_[i]; }

  static Graph* active();

 private:
  friend class GraphScope;
  friend Tensor record(std::string_view, Tensor, std::initializer_list<Tensor>,
                       std::function<void(std::span<const double>)>);
  std::vector<Record> records_;
};

/// Makes `graph` the recording target for this thread until destruction.
class GraphScope {
 public:
  explicit GraphScope(Graph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

/// Registers `result` as the output of a differentiable op. Records only when
/// a graph is active and some input requires a gradient; otherwise returns
/// `result` untouched. `backward` receives d(loss)/d(result) and must
/// accumulate into the inputs through grad_sink().
Tensor record(std::string_view op, Tensor result, std::initializer_list<Tensor> inputs,
              std::function<void(std::span<const double>)> backward);

/// Gradient accumulation buffer of `t`, allocated on first use. Empty when `t`
/// does not take part in differentiation.
std::span<double> grad_sink(const Tensor& t);

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1,
              std::size_t padding = 0);
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

enum class Elementwise { add, sub, mul, relu, scale };
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b);
Tensor elementwise(Elementwise op, const Tensor& a, double s);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// [C x H x W] <-> [H*W x C]; token index is y*W + x.
Tensor to_tokens(const Tensor& chw);
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- gradient verification ------------------------------------------------

struct GradCheckReport {
  bool passed = false;
  double max_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the taped gradient of scalar `f` at `x` against central
/// differences. The per-coordinate error is |a - n| / max(|a|, |n|, floor);
/// the floor turns near-zero coordinates into an absolute comparison.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-5, double tol = 1e-4, double floor = 1e-3);

// ---- optimizer ------------------------------------------------------------

struct SgdConfig {
  double lr_start = 0.005;
  double lr_end = 0.0005;
  double momentum = 0.9;
  int total_epochs = 50;
  double weight_decay = 0.0;

  /// Log-space interpolation from lr_start (first epoch) to lr_end (last).
  double learning_rate(int epoch) const;
  void validate() const;
};

using NamedTensor = std::pair<std::string, Tensor>;

class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  /// v <- m v + g; p <- p - lr(epoch) v. Throws NumericError (and leaves all
  /// parameters untouched) when any gradient is non-finite. Parameters that
  /// do not require a gradient are skipped, so a fixed parameter list can be
  /// passed while some of it is frozen.
  void step(std::span<Tensor> params, int epoch);

  const SgdConfig& config() const { return cfg_; }
  std::vector<std::vector<double>>& velocities() { return velocity_; }
  const std::vector<std::vector<double>>& velocities() const { return velocity_; }

 private:
  SgdConfig cfg_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace dast

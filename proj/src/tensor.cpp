// SPDX-License-Identifier: Apache-2.0

#include "dast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dast {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

}  // namespace detail

using detail::TensorImpl;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

static const Shape kEmptyShape{};

const Shape& Tensor::shape() const { return impl_ ? impl_->shape : kEmptyShape; }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) {
    throw DimensionError("dimension " + std::to_string(i) + " out of range for " +
                         shape_str(shape()));
  }
  return impl_->shape[i];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<double> Tensor::data() {
  if (!impl_) return {};
  return impl_->data;
}

std::span<const double> Tensor::data() const {
  if (!impl_) return {};
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const { return impl_->data[i * dim(1) + j]; }
double& Tensor::at(std::size_t i, std::size_t j) { return impl_->data[i * dim(1) + j]; }

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return impl_->data[(c * impl_->shape[1] + y) * impl_->shape[2] + x];
}

double& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  return impl_->data[(c * impl_->shape[1] + y) * impl_->shape[2] + x];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor(shape());
  return Tensor(shape(), impl_->grad);
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data);
}

bool Tensor::all_finite() const {
  return std::all_of(data().begin(), data().end(), [](double v) { return std::isfinite(v); });
}

bool equal_exact(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- Graph ----------------------------------------------------------------

namespace {
thread_local Graph* g_active = nullptr;
}

Graph* Graph::active() { return g_active; }

GraphScope::GraphScope(Graph& graph) : previous_(g_active) { g_active = &graph; }
GraphScope::~GraphScope() { g_active = previous_; }

Tensor record(std::string_view op, Tensor result, std::initializer_list<Tensor> inputs,
              std::function<void(std::span<const double>)> backward) {
  Graph* graph = g_active;
  if (!graph) return result;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return result;
  result.impl_->requires_grad = true;
  Graph::Record rec;
  rec.op = std::string(op);
  for (const Tensor& t : inputs) rec.inputs.push_back(t.impl_);
  rec.output = result.impl_;
  rec.backward = std::move(backward);
  graph->records_.push_back(std::move(rec));
  return result;
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.impl_ || !t.impl_->requires_grad) return {};
  auto& g = t.impl_->grad;
  if (g.empty()) g.assign(t.impl_->data.size(), 0.0);
  return g;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss is not connected to any leaf that requires a gradient");
  }
  // Intermediate buffers are owned by this graph; reset them so a repeated
  // call does not double count.
  for (auto& rec : records_) rec.output->grad.clear();
  grad_sink(loss)[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

// ---- matmul / transpose ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({m, n});
  auto A = a.data();
  auto B = b.data();
  auto C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * n];
      double* crow = &C[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return record("matmul", out, {a, b}, [a, b, m, k, n](std::span<const double> g) {
    auto A = a.data();
    auto B = b.data();
    if (auto ga = grad_sink(a); !ga.empty()) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (auto gb = grad_sink(b); !gb.empty()) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) O[j * m + i] = A[i * n + j];
  return record("transpose", out, {a}, [a, m, n](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

// ---- softmax --------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({m, n});
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &A[i * n];
    double* orow = &O[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  return record("softmax_rows", out, {a}, [a, out, m, n](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto Y = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += Y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

// ---- conv2d ---------------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(k, 4, "conv2d");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), k.dim(3), stride, pad, 0, 0};
  if (k.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " expects " +
                         std::to_string(k.dim(1)) + " input channels, input is " +
                         shape_str(x.shape()));
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                         shape_str(x.shape()) + " (padding " + std::to_string(pad) + ")");
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Output columns ox whose input column ox*stride + kx - pad lies in [0, w).
inline void valid_range(std::size_t kx, const ConvGeom& g, std::size_t in_extent,
                        std::size_t out_extent, std::size_t& lo, std::size_t& hi) {
  // need ox*stride + kx >= pad and ox*stride + kx - pad < in_extent
  lo = kx >= g.pad ? 0 : (g.pad - kx + g.stride - 1) / g.stride;
  const std::ptrdiff_t lim = static_cast<std::ptrdiff_t>(in_extent + g.pad) -
                             static_cast<std::ptrdiff_t>(kx);  // ox*stride < lim
  if (lim <= 0) {
    lo = hi = 0;
    return;
  }
  hi = std::min(out_extent, static_cast<std::size_t>((lim - 1) / static_cast<std::ptrdiff_t>(g.stride)) + 1);
  if (lo > hi) lo = hi;
}

void conv_forward(const ConvGeom& g, std::span<const double> X, std::span<const double> K,
                  std::span<double> O) {
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* out_c = &O[co * g.oh * g.ow];
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* in_c = &X[ci * g.h * g.w];
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t oy_lo, oy_hi;
        valid_range(ky, g, g.h, g.oh, oy_lo, oy_hi);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const double wv = K[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
          if (wv == 0.0) continue;
          std::size_t ox_lo, ox_hi;
          valid_range(kx, g, g.w, g.ow, ox_lo, ox_hi);
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const double* in_row = in_c + (oy * g.stride + ky - g.pad) * g.w;
            double* out_row = out_c + oy * g.ow;
            if (g.stride == 1) {
              const double* src = in_row + kx - g.pad;
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) out_row[ox] += wv * src[ox];
            } else {
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox)
                out_row[ox] += wv * in_row[ox * g.stride + kx - g.pad];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, std::span<const double> X, std::span<const double> K,
                   std::span<const double> G, std::span<double> gx, std::span<double> gk) {
  for (std::size_t co = 0; co < g.cout; ++co) {
    const double* g_c = &G[co * g.oh * g.ow];
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* in_c = &X[ci * g.h * g.w];
      double* gin_c = gx.empty() ? nullptr : &gx[ci * g.h * g.w];
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t oy_lo, oy_hi;
        valid_range(ky, g, g.h, g.oh, oy_lo, oy_hi);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::size_t kidx = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
          const double wv = K[kidx];
          std::size_t ox_lo, ox_hi;
          valid_range(kx, g, g.w, g.ow, ox_lo, ox_hi);
          // unsigned wrap-around cancels once ox * stride is added
          auto base = [&](std::size_t oy) { return (oy * g.stride + ky - g.pad) * g.w + kx - g.pad; };
          if (!gk.empty()) {
            double acc = 0.0;
            for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
              const std::size_t off = base(oy);
              const double* grow = g_c + oy * g.ow;
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) acc += grow[ox] * in_c[off + ox * g.stride];
            }
            gk[kidx] += acc;
          }
          if (gin_c) {
            for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
              const std::size_t off = base(oy);
              const double* grow = g_c + oy * g.ow;
              if (g.stride == 1) {
                for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) gin_c[off + ox] += wv * grow[ox];
              } else {
                for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) gin_c[off + ox * g.stride] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeom g = conv_geometry(x, kernel, stride, padding);
  Tensor out({g.cout, g.oh, g.ow});
  conv_forward(g, x.data(), kernel.data(), out.data());
  return record("conv2d", out, {x, kernel}, [x, kernel, g](std::span<const double> grad) {
    conv_backward(g, x.data(), kernel.data(), grad, grad_sink(x), grad_sink(kernel));
  });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const ConvGeom g = conv_geometry(x, kernel, stride, padding);
  if (bias.numel() != g.cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }
  Tensor out({g.cout, g.oh, g.ow});
  auto O = out.data();
  auto B = bias.data();
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t co = 0; co < g.cout; ++co) std::fill_n(&O[co * plane], plane, B[co]);
  conv_forward(g, x.data(), kernel.data(), O);
  return record("conv2d", out, {x, kernel, bias},
                [x, kernel, bias, g, plane](std::span<const double> grad) {
                  conv_backward(g, x.data(), kernel.data(), grad, grad_sink(x), grad_sink(kernel));
                  if (auto gb = grad_sink(bias); !gb.empty()) {
                    for (std::size_t co = 0; co < g.cout; ++co) {
                      double s = 0.0;
                      for (std::size_t i = 0; i < plane; ++i) s += grad[co * plane + i];
                      gb[co] += s;
                    }
                  }
                });
}

// ---- linear ---------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  return matmul(x, w);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = linear(x, w);
  const std::size_t t = y.dim(0), c = y.dim(1);
  if (b.numel() != c) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " vs output " +
                         shape_str(y.shape()));
  }
  Tensor out({t, c});
  auto Y = y.data();
  auto B = b.data();
  auto O = out.data();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < c; ++j) O[i * c + j] = Y[i * c + j] + B[j];
  return record("bias_add", out, {y, b}, [y, b, t, c](std::span<const double> g) {
    if (auto gy = grad_sink(y); !gy.empty())
      for (std::size_t i = 0; i < t * c; ++i) gy[i] += g[i];
    if (auto gb = grad_sink(b); !gb.empty())
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::mul: return mul(a, b);
    case Elementwise::relu: return relu(a);
    case Elementwise::scale:
      if (b.numel() != 1) throw DimensionError("scale: factor must be a scalar tensor");
      return scale(a, b.item());
  }
  throw ContractError("unknown elementwise op");
}

Tensor elementwise(Elementwise op, const Tensor& a, double s) {
  switch (op) {
    case Elementwise::add: return add_scalar(a, s);
    case Elementwise::sub: return add_scalar(a, -s);
    case Elementwise::mul:
    case Elementwise::scale: return scale(a, s);
    case Elementwise::relu: return relu(a);
  }
  throw ContractError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto A = a.data();
  auto B = b.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] + B[i];
  return record("add", out, {a, b}, [a, b](std::span<const double> g) {
    if (auto ga = grad_sink(a); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (auto gb = grad_sink(b); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto A = a.data();
  auto B = b.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] - B[i];
  return record("sub", out, {a, b}, [a, b](std::span<const double> g) {
    if (auto ga = grad_sink(a); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (auto gb = grad_sink(b); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto A = a.data();
  auto B = b.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] * B[i];
  return record("mul", out, {a, b}, [a, b](std::span<const double> g) {
    auto A = a.data();
    auto B = b.data();
    if (auto ga = grad_sink(a); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    if (auto gb = grad_sink(b); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
  });
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] > 0.0 ? A[i] : 0.0;
  return record("relu", out, {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto A = a.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] * s;
  return record("scale", out, {a}, [a, s](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out(a.shape());
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = A[i] + s;
  return record("add_scalar", out, {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape());
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = std::exp(A[i]);
  return record("exp", out, {a}, [a, out](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto O = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * O[i];
  });
}

Tensor log(const Tensor& a) {
  Tensor out(a.shape());
  auto A = a.data();
  auto O = out.data();
  for (std::size_t i = 0; i < O.size(); ++i) O[i] = std::log(A[i]);
  return record("log", out, {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto A = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
  });
}

// ---- reductions / shape ---------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record("sum", Tensor::scalar(s), {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (double& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  return record("reshape", out, {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor to_tokens(const Tensor& chw) {
  require_rank(chw, 3, "to_tokens");
  const std::size_t c = chw.dim(0), t = chw.dim(1) * chw.dim(2);
  Tensor out({t, c});
  auto X = chw.data();
  auto O = out.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < t; ++i) O[i * c + ch] = X[ch * t + i];
  return record("to_tokens", out, {chw}, [chw, c, t](std::span<const double> g) {
    auto gx = grad_sink(chw);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < t; ++i) gx[ch * t + i] += g[i * c + ch];
  });
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width) {
  require_rank(tokens, 2, "from_tokens");
  const std::size_t t = tokens.dim(0), c = tokens.dim(1);
  if (t != height * width) {
    throw DimensionError("from_tokens: " + std::to_string(t) + " tokens cannot fill " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor out({c, height, width});
  auto X = tokens.data();
  auto O = out.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < t; ++i) O[ch * t + i] = X[i * c + ch];
  return record("from_tokens", out, {tokens}, [tokens, c, t](std::span<const double> g) {
    auto gt = grad_sink(tokens);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < t; ++i) gt[i * c + ch] += g[ch * t + i];
  });
}

// ---- grad_check -----------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol, double floor) {
  GradCheckReport report;
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  {
    Graph graph;
    GraphScope scope(graph);
    Tensor y = f(probe);
    if (y.numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
    graph.backward(y);
  }
  const Tensor analytic = probe.grad_tensor();

  Tensor work = x.clone();
  for (std::size_t i = 0; i < work.numel(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double fp = f(work).item();
    work[i] = orig - h;
    const double fm = f(work).item();
    work[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    double err = std::abs(a - numeric) / denom;
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    if (i == 0 || err > report.max_error) {
      report.max_error = err;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_error < tol;
  return report;
}

// ---- SGD ------------------------------------------------------------------

void SgdConfig::validate() const {
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw ContractError("SGD learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("SGD momentum must lie in [0, 1)");
  if (total_epochs < 1) throw ContractError("SGD schedule needs at least one epoch");
}

double SgdConfig::learning_rate(int epoch) const {
  if (total_epochs <= 1 || epoch <= 0) return lr_start;
  if (epoch >= total_epochs - 1) return lr_end;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  const double a = std::log(lr_start), b = std::log(lr_end);
  return std::exp(a + (b - a) * t);
}

void Sgd::step(std::span<Tensor> params, int epoch) {
  for (const Tensor& p : params) {
    if (!p.requires_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient, step rejected");
    }
  }
  if (velocity_.size() != params.size()) {
    velocity_.resize(params.size());
  }
  const double lr = cfg_.learning_rate(epoch);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto& v = velocity_[k];
    if (v.size() != p.numel()) v.assign(p.numel(), 0.0);
    if (!p.requires_grad()) continue;  // frozen: value and velocity kept
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      double gi = g.empty() ? 0.0 : g[i];
      if (cfg_.weight_decay != 0.0) gi += cfg_.weight_decay * d[i];
      v[i] = cfg_.momentum * v[i] + gi;
      d[i] -= lr * v[i];
    }
  }
}

}  // namespace dast

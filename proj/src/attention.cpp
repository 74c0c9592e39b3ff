// SPDX-License-Identifier: Apache-2.0

#include "dast/attention.hpp"

#include <cmath>

namespace dast {

Projection Projection::init(std::size_t channels, bool with_bias, Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(channels));
  Projection p;
  p.w_q = Tensor::randn({channels, channels}, rng, sd);
  p.w_k = Tensor::randn({channels, channels}, rng, sd);
  p.w_v = Tensor::randn({channels, channels}, rng, sd);
  if (with_bias) {
    p.b_q = Tensor::zeros({channels});
    p.b_k = Tensor::zeros({channels});
    p.b_v = Tensor::zeros({channels});
  }
  return p;
}

void Projection::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".w_v", w_v);
  if (has_bias()) {
    out.emplace_back(prefix + ".b_q", b_q);
    out.emplace_back(prefix + ".b_k", b_k);
    out.emplace_back(prefix + ".b_v", b_v);
  }
}

namespace {

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
  return b.defined() ? linear(x, w, b) : linear(x, w);
}

}  // namespace

AttentionOutput attend(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                       const Projection& proj) {
  const std::size_t c = proj.channels();
  for (const Tensor* t : {&query_src, &key_src, &value_src}) {
    if (t->rank() != 2 || t->dim(1) != c) {
      throw DimensionError("attention: tokens " + shape_str(t->shape()) +
                           " do not match projection width " + std::to_string(c));
    }
  }
  if (key_src.dim(0) != value_src.dim(0)) {
    throw DimensionError("attention: key/value token counts differ");
  }
  Tensor q = project(query_src, proj.w_q, proj.b_q);
  Tensor k = project(key_src, proj.w_k, proj.b_k);
  Tensor v = project(value_src, proj.w_v, proj.b_v);
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(c)));
  Tensor attn = softmax_rows(logits);
  return {matmul(attn, v), attn};
}

Tensor make_filter(std::size_t channels, bool zero, Rng& rng) {
  if (zero) return Tensor::zeros({channels, channels, 3, 3});
  const double sd = std::sqrt(1.0 / static_cast<double>(channels * 9));
  return Tensor::randn({channels, channels, 3, 3}, rng, sd);
}

Tensor apply_filter(const Tensor& x, const Tensor& filter) { return conv2d(x, filter, 1, 1); }

}  // namespace dast

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "dast/tensor.hpp"

namespace dast {

/// Q/K/V fully connected maps over the channel dimension, each C x C.
/// Biases are undefined tensors unless requested.
struct Projection {
  Tensor w_q, w_k, w_v;
  Tensor b_q, b_k, b_v;

  static Projection init(std::size_t channels, bool with_bias, Rng& rng);
  bool has_bias() const { return b_q.defined(); }
  std::size_t channels() const { return w_q.dim(0); }
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct AttentionOutput {
  Tensor output;     // [T_q x C]
  Tensor attention;  // [T_q x T_k], row-stochastic
};

/// Single-head scaled dot-product attention on token matrices:
/// softmax((query_src Wq)(key_src Wk)^T / sqrt(C)) (value_src Wv).
AttentionOutput attend(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                       const Projection& proj);

/// 3x3 same-padding filter bank without bias, C x C x 3 x 3.
Tensor make_filter(std::size_t channels, bool zero, Rng& rng);
Tensor apply_filter(const Tensor& x, const Tensor& filter);

}  // namespace dast

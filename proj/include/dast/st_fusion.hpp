// SPDX-License-Identifier: Apache-2.0
//
// Spatio-temporal template fusion.
//
//   f*_z = Filter(Encode(f_a, f_c)) + f_i
//   Encode(f_a, f_c) = softmax(Q_c K_a^T / sqrt(C)) V_c
//
// with Q_c = tokens(f_c) Wq, K_a = tokens(f_a) Wk, V_c = tokens(f_c) Wv and
// Filter a single 3x3 same-padding conv. The filter starts at zero, so an
// untrained module passes the initial template through unchanged.

#pragma once

#include <string>
#include <vector>

#include "dast/attention.hpp"
#include "dast/tensor.hpp"

namespace dast {

/// Template features of the initial (f_i), accumulated (f_a) and current
/// (f_c) frames. All three share one shape; f_i is fixed per sequence.
struct TemplateTriple {
  Tensor f_i, f_a, f_c;
  void validate() const;
};

struct AttentionParams {
  Projection proj;
  Tensor filter;  // C x C x 3 x 3

  static AttentionParams init(std::size_t channels, bool fc_bias, Rng& rng, bool zero_filter = true);
  std::vector<NamedTensor> named(const std::string& prefix = "st") const;
};

struct EncodeResult {
  Tensor features;   // C x h x w
  Tensor attention;  // T x T
};

EncodeResult encode(const Tensor& f_a, const Tensor& f_c, const AttentionParams& params);
Tensor st_fuse(const TemplateTriple& triple, const AttentionParams& params);

}  // namespace dast

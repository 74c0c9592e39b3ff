// SPDX-License-Identifier: Apache-2.0
//
// Discriminative augmentation of search features.
//
// decode(): self-attention over the search tokens, then cross-attention with
// queries from the self-attended search tokens and keys/values from the
// enhanced template f*_z. The result (the mask) lives on the search grid.
// da_augment(): f*_s = Filter(mask) + f_s.

#pragma once

#include <string>
#include <vector>

#include "dast/attention.hpp"
#include "dast/tensor.hpp"

namespace dast {

struct DaParams {
  Projection self_attn;
  Projection cross_attn;
  // Applied in order with a ReLU between consecutive filters. The last one
  // starts at zero.
  std::vector<Tensor> filters;

  static DaParams init(std::size_t channels, int filter_depth, bool fc_bias, Rng& rng);
  std::vector<NamedTensor> named(const std::string& prefix = "da") const;
};

struct DecodeResult {
  Tensor mask;             // C x h_s x w_s
  Tensor self_attention;   // T_s x T_s
  Tensor cross_attention;  // T_s x T_z
};

DecodeResult decode(const Tensor& f_star_z, const Tensor& f_s, const DaParams& params);
Tensor da_augment(const Tensor& f_star_z, const Tensor& f_s, const DaParams& params);

}  // namespace dast

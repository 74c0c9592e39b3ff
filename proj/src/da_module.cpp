// SPDX-License-Identifier: Apache-2.0

#include "dast/da_module.hpp"

namespace dast {

DaParams DaParams::init(std::size_t channels, int filter_depth, bool fc_bias, Rng& rng) {
  if (filter_depth < 1 || filter_depth > 2) {
    throw ContractError("da: filter depth must be 1 or 2, got " + std::to_string(filter_depth));
  }
  DaParams p;
  p.self_attn = Projection::init(channels, fc_bias, rng);
  p.cross_attn = Projection::init(channels, fc_bias, rng);
  for (int i = 0; i < filter_depth; ++i) {
    p.filters.push_back(make_filter(channels, i == filter_depth - 1, rng));
  }
  return p;
}

std::vector<NamedTensor> DaParams::named(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  self_attn.append_named(prefix + ".self", out);
  cross_attn.append_named(prefix + ".cross", out);
  for (std::size_t i = 0; i < filters.size(); ++i) {
    out.emplace_back(prefix + ".filter" + std::to_string(i), filters[i]);
  }
  return out;
}

DecodeResult decode(const Tensor& f_star_z, const Tensor& f_s, const DaParams& params) {
  if (f_star_z.rank() != 3 || f_s.rank() != 3) {
    throw DimensionError("decode: expected [CxHxW] maps, got " + shape_str(f_star_z.shape()) +
                         " and " + shape_str(f_s.shape()));
  }
  if (f_star_z.dim(0) != f_s.dim(0)) {
    throw DimensionError("decode: channel mismatch " + shape_str(f_star_z.shape()) + " vs " +
                         shape_str(f_s.shape()));
  }
  Tensor s = to_tokens(f_s);
  Tensor z = to_tokens(f_star_z);
  AttentionOutput self = attend(s, s, s, params.self_attn);
  AttentionOutput cross = attend(self.output, z, z, params.cross_attn);
  return {from_tokens(cross.output, f_s.dim(1), f_s.dim(2)), self.attention, cross.attention};
}

Tensor da_augment(const Tensor& f_star_z, const Tensor& f_s, const DaParams& params) {
  Tensor x = decode(f_star_z, f_s, params).mask;
  for (std::size_t i = 0; i < params.filters.size(); ++i) {
    if (i > 0) x = relu(x);
    x = apply_filter(x, params.filters[i]);
  }
  return add(x, f_s);
}

}  // namespace dast

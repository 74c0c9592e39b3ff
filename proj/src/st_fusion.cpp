// SPDX-License-Identifier: Apache-2.0

#include "dast/st_fusion.hpp"

namespace dast {

void TemplateTriple::validate() const {
  if (!f_i.defined() || !f_a.defined() || !f_c.defined()) {
    throw ContractError("template triple is not initialised");
  }
  if (f_i.rank() != 3 || f_a.shape() != f_i.shape() || f_c.shape() != f_i.shape()) {
    throw DimensionError("template triple shapes differ: f_i " + shape_str(f_i.shape()) +
                         ", f_a " + shape_str(f_a.shape()) + ", f_c " + shape_str(f_c.shape()));
  }
}

AttentionParams AttentionParams::init(std::size_t channels, bool fc_bias, Rng& rng,
                                      bool zero_filter) {
  AttentionParams p;
  p.proj = Projection::init(channels, fc_bias, rng);
  p.filter = make_filter(channels, zero_filter, rng);
  return p;
}

std::vector<NamedTensor> AttentionParams::named(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  proj.append_named(prefix + ".attn", out);
  out.emplace_back(prefix + ".filter", filter);
  return out;
}

EncodeResult encode(const Tensor& f_a, const Tensor& f_c, const AttentionParams& params) {
  if (f_a.rank() != 3 || f_a.shape() != f_c.shape()) {
    throw DimensionError("encode: f_a " + shape_str(f_a.shape()) + " and f_c " +
                         shape_str(f_c.shape()) + " must share a [CxHxW] shape");
  }
  if (f_c.dim(0) != params.proj.channels()) {
    throw DimensionError("encode: feature channels " + std::to_string(f_c.dim(0)) +
                         " differ from attention width " + std::to_string(params.proj.channels()));
  }
  Tensor tc = to_tokens(f_c);
  Tensor ta = to_tokens(f_a);
  AttentionOutput att = attend(tc, ta, tc, params.proj);
  return {from_tokens(att.output, f_c.dim(1), f_c.dim(2)), att.attention};
}

Tensor st_fuse(const TemplateTriple& triple, const AttentionParams& params) {
  triple.validate();
  Tensor enc = encode(triple.f_a, triple.f_c, params).features;
  return add(apply_filter(enc, params.filter), triple.f_i);
}

}  // namespace dast

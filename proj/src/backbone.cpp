// SPDX-License-Identifier: Apache-2.0

#include "dast/backbone.hpp"

#include <cmath>
#include <string>

namespace dast {

namespace {
constexpr int kKernel = 3;
constexpr int kStride = 2;
}  // namespace

int BackboneConfig::feature_size(int input) const {
  int n = input;
  for (std::size_t s = 0; s < channels.size(); ++s) {
    if (n < kKernel) return 0;
    n = (n - kKernel) / kStride + 1;
  }
  return n;
}

void BackboneConfig::validate() const {
  if (channels.empty()) throw ContractError("backbone: at least one stage required");
  if (total_stride != (1 << channels.size())) {
    throw ContractError("backbone: total_stride " + std::to_string(total_stride) +
                        " does not match " + std::to_string(channels.size()) +
                        " stride-2 stages");
  }
  for (int c : channels)
    if (c <= 0) throw ContractError("backbone: channel counts must be positive");
  if (feature_channels <= 0) throw ContractError("backbone: feature_channels must be positive");
  const int tz = template_feature_size(), tx = search_feature_size();
  if (tz < 1 || tz % 2 == 0) {
    throw ContractError("backbone: template_size " + std::to_string(template_size) +
                        " gives feature side " + std::to_string(tz) + " (must be odd)");
  }
  if (tx % 2 == 0 || tx <= tz) {
    throw ContractError("backbone: search_size " + std::to_string(search_size) +
                        " gives feature side " + std::to_string(tx) +
                        " (must be odd and exceed the template side)");
  }
}

BackboneConfig BackboneConfig::paper_scale() {
  BackboneConfig cfg;
  cfg.channels = {32, 64, 96};
  cfg.feature_channels = 64;
  cfg.template_size = 127;
  cfg.search_size = 287;
  return cfg;
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneParams p;
  std::size_t in = 3;
  for (int c : cfg.channels) {
    const std::size_t out = static_cast<std::size_t>(c);
    const double fan_in = static_cast<double>(in * kKernel * kKernel);
    p.kernels.push_back(Tensor::randn({out, in, kKernel, kKernel}, rng, std::sqrt(2.0 / fan_in)));
    p.biases.push_back(Tensor::zeros({out}));
    in = out;
  }
  const std::size_t fc = static_cast<std::size_t>(cfg.feature_channels);
  p.kernels.push_back(Tensor::randn({fc, in, 1, 1}, rng, std::sqrt(1.0 / static_cast<double>(in))));
  p.biases.push_back(Tensor::zeros({fc}));
  return p;
}

std::vector<NamedTensor> BackboneParams::named(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".weight", kernels[i]);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".bias", biases[i]);
  }
  return out;
}

Tensor extract_features(const Tensor& image, const BackboneParams& params,
                        const BackboneConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("extract_features: expected a [3xHxW] image, got " +
                         shape_str(image.shape()));
  }
  if (!image.all_finite()) throw NumericError("extract_features: non-finite pixel values");
  if (cfg.feature_size(static_cast<int>(std::min(image.dim(1), image.dim(2)))) < 1) {
    throw DimensionError("extract_features: image " + shape_str(image.shape()) +
                         " too small for the backbone");
  }
  Tensor x = image;
  const std::size_t stages = params.kernels.size() - 1;
  for (std::size_t s = 0; s < stages; ++s) {
    x = relu(conv2d(x, params.kernels[s], params.biases[s], kStride, 0));
  }
  return conv2d(x, params.kernels[stages], params.biases[stages], 1, 0);
}

Tensor cross_correlate(const Tensor& templ, const Tensor& search) {
  if (templ.rank() != 3 || search.rank() != 3) {
    throw DimensionError("cross_correlate: expected [CxHxW] maps, got " + shape_str(templ.shape()) +
                         " and " + shape_str(search.shape()));
  }
  const std::size_t c = templ.dim(0), hz = templ.dim(1), wz = templ.dim(2);
  const std::size_t hx = search.dim(1), wx = search.dim(2);
  if (search.dim(0) != c) {
    throw DimensionError("cross_correlate: channel mismatch " + shape_str(templ.shape()) + " vs " +
                         shape_str(search.shape()));
  }
  if (hz > hx || wz > wx) {
    throw DimensionError("cross_correlate: template " + shape_str(templ.shape()) +
                         " larger than search " + shape_str(search.shape()));
  }
  const std::size_t oh = hx - hz + 1, ow = wx - wz + 1;
  Tensor out({c, oh, ow});
  auto Z = templ.data();
  auto X = search.data();
  auto O = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* z = &Z[ch * hz * wz];
    const double* xs = &X[ch * hx * wx];
    double* o = &O[ch * oh * ow];
    for (std::size_t u = 0; u < hz; ++u)
      for (std::size_t v = 0; v < wz; ++v) {
        const double zv = z[u * wz + v];
        if (zv == 0.0) continue;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* xrow = xs + (y + u) * wx + v;
          double* orow = o + y * ow;
          for (std::size_t x = 0; x < ow; ++x) orow[x] += zv * xrow[x];
        }
      }
  }
  return record("cross_correlate", out, {templ, search},
                [templ, search, c, hz, wz, hx, wx, oh, ow](std::span<const double> g) {
                  auto Z = templ.data();
                  auto X = search.data();
                  auto gz = grad_sink(templ);
                  auto gx = grad_sink(search);
                  for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* gc = &g[ch * oh * ow];
                    for (std::size_t u = 0; u < hz; ++u)
                      for (std::size_t v = 0; v < wz; ++v) {
                        const double zv = Z[ch * hz * wz + u * wz + v];
                        double acc = 0.0;
                        for (std::size_t y = 0; y < oh; ++y) {
                          const std::size_t base = ch * hx * wx + (y + u) * wx + v;
                          const double* grow = gc + y * ow;
                          for (std::size_t x = 0; x < ow; ++x) {
                            acc += grow[x] * X[base + x];
                            if (!gx.empty()) gx[base + x] += zv * grow[x];
                          }
                        }
                        if (!gz.empty()) gz[ch * hz * wz + u * wz + v] += acc;
                      }
                  }
                });
}

Tensor center_channels(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("center_channels: expected a [CxHxW] map, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(1), w = x.dim(2), n = h * w;
  Tensor tokens = to_tokens(x);
  Tensor avg = matmul(Tensor(Shape{1, n}, 1.0 / static_cast<double>(n)), tokens);
  return from_tokens(sub(tokens, matmul(Tensor::ones({n, 1}), avg)), h, w);
}

}  // namespace dast

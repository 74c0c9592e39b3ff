// SPDX-License-Identifier: Apache-2.0

#include "dast/image.hpp"

#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace dast {

std::array<double, 3> channel_mean(const Image& img) {
  std::array<double, 3> m{0, 0, 0};
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  if (plane == 0) return m;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += img.pixels[c * plane + i];
    m[c] = s / static_cast<double>(plane);
  }
  return m;
}

Crop crop_square(const Image& img, double cx, double cy, double side, int out_size) {
  if (out_size <= 0 || !(side > 0.0)) throw ContractError("crop_square: empty crop requested");
  Crop crop;
  crop.patch = Tensor({3, static_cast<std::size_t>(out_size), static_cast<std::size_t>(out_size)});
  crop.scale = side / out_size;
  const auto mean = channel_mean(img);
  const double x0 = cx - side / 2, y0 = cy - side / 2;
  auto out = crop.patch.data();
  const std::size_t plane = static_cast<std::size_t>(out_size) * out_size;

  for (int v = 0; v < out_size; ++v) {
    // sample position relative to pixel centres
    const double fy = y0 + (v + 0.5) * crop.scale - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const double ay = fy - iy;
    for (int u = 0; u < out_size; ++u) {
      const double fx = x0 + (u + 0.5) * crop.scale - 0.5;
      const int ix = static_cast<int>(std::floor(fx));
      const double ax = fx - ix;
      const int xs[2] = {ix, ix + 1};
      const int ys[2] = {iy, iy + 1};
      const double wx[2] = {1.0 - ax, ax};
      const double wy[2] = {1.0 - ay, ay};
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            const double wgt = wy[a] * wx[b];
            const bool inside = ys[a] >= 0 && ys[a] < img.height && xs[b] >= 0 && xs[b] < img.width;
            if (inside) {
              acc += wgt * img.at(c, ys[a], xs[b]);
            } else {
              acc += wgt * mean[c];
              if (wgt > 0.0) crop.padded = true;
            }
          }
        }
        out[c * plane + static_cast<std::size_t>(v) * out_size + u] = acc;
      }
    }
  }
  return crop;
}

double template_side(double w, double h, double context) {
  const double p = context * (w + h);
  return std::sqrt((w + p) * (h + p));
}

Tensor to_network_input(const Tensor& patch) { return scale(add_scalar(patch, -0.5), 4.0); }

Image read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image " + path.string());
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR
      img.at(0, y, x) = row[x][2] / 255.0f;
      img.at(1, y, x) = row[x][1] / 255.0f;
      img.at(2, y, x) = row[x][0] / 255.0f;
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  auto to_byte = [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x][2] = to_byte(img.at(0, y, x));
      row[x][1] = to_byte(img.at(1, y, x));
      row[x][0] = to_byte(img.at(2, y, x));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write image " + path.string());
}

}  // namespace dast

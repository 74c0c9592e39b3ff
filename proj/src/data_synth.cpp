// SPDX-License-Identifier: Apache-2.0

#include "dast/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dast {

namespace fs = std::filesystem;

const std::vector<std::string>& attribute_names() {
  static const std::vector<std::string> names{"deformation", "occlusion", "scale_variation",
                                              "background_clutter", "motion_blur"};
  return names;
}

std::string to_string(Attribute a) { return attribute_names()[static_cast<std::size_t>(a)]; }

Attribute parse_attribute(const std::string& name) {
  const auto& names = attribute_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Attribute>(i);
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ContractError("unknown attribute '" + name + "' (valid: " + valid + ")");
}

void SequenceSpec::validate() const {
  if (length < 2) throw ContractError("synth: length must be at least 2");
  if (width < 8 || height < 8) throw ContractError("synth: frame too small");
  if (target_w < 2 || target_h < 2) throw ContractError("synth: target too small");
  // leave room for scale variation
  if (target_w * 1.5 >= width || target_h * 1.5 >= height) {
    throw ContractError("synth: target " + std::to_string(target_w) + "x" + std::to_string(target_h) +
                        " does not fit a " + std::to_string(width) + "x" + std::to_string(height) + " frame");
  }
  if (!(speed >= 0.0)) throw ContractError("synth: speed must be >= 0");
  if (!(camera_speed >= 0.0 && camera_speed <= 8.0)) throw ContractError("synth: camera_speed must lie in [0, 8]");
}

double coverage(const Rect& target, const Rect& occluder) {
  const double iw = std::max(0.0, std::min(target.x + target.w, occluder.x + occluder.w) - std::max(target.x, occluder.x));
  const double ih = std::max(0.0, std::min(target.y + target.h, occluder.y + occluder.h) - std::max(target.y, occluder.y));
  const double area = target.w * target.h;
  return area > 0 ? iw * ih / area : 0.0;
}

namespace {

using Color = std::array<float, 3>;

struct Texture {
  Color c1, c2, c3;
  double fu, fv, phase;

  Color at(double u, double v) const {
    const double du = u - 0.5, dv = v - 0.5;
    if (du * du + dv * dv < 0.06) return c3;
    return std::sin(2 * std::numbers::pi * (fu * u + fv * v) + phase) > 0 ? c1 : c2;
  }
};

Color random_color(Rng& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {u(rng), u(rng), u(rng)};
}

Texture random_texture(Rng& rng) {
  std::uniform_real_distribution<double> f(1.0, 2.5), ph(0, 2 * std::numbers::pi);
  std::bernoulli_distribution flip(0.5);
  Texture t{random_color(rng), random_color(rng), random_color(rng), f(rng), f(rng), ph(rng)};
  if (flip(rng)) t.fv = -t.fv;
  return t;
}

struct Mover {
  double cx, cy, vx, vy;
  void step(double w, double h, int width, int height) {
    cx += vx;
    cy += vy;
    const double lo_x = w / 2 + 1, hi_x = width - w / 2 - 1;
    const double lo_y = h / 2 + 1, hi_y = height - h / 2 - 1;
    if (cx < lo_x) { cx = 2 * lo_x - cx; vx = -vx; }
    if (cx > hi_x) { cx = 2 * hi_x - cx; vx = -vx; }
    if (cy < lo_y) { cy = 2 * lo_y - cy; vy = -vy; }
    if (cy > hi_y) { cy = 2 * hi_y - cy; vy = -vy; }
    cx = std::clamp(cx, lo_x, hi_x);
    cy = std::clamp(cy, lo_y, hi_y);
  }
};

Mover random_mover(double speed, int width, int height, double w, double h, Rng& rng) {
  std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> px(w / 2 + 1, width - w / 2 - 1), py(h / 2 + 1, height - h / 2 - 1);
  const double a = ang(rng);
  return {px(rng), py(rng), speed * std::cos(a), speed * std::sin(a)};
}

Rect integer_box(double cx, double cy, double w, double h, int width, int height) {
  const int iw = std::clamp(static_cast<int>(std::lround(w)), 2, width);
  const int ih = std::clamp(static_cast<int>(std::lround(h)), 2, height);
  const int x = std::clamp(static_cast<int>(std::lround(cx - iw / 2.0)), 0, width - iw);
  const int y = std::clamp(static_cast<int>(std::lround(cy - ih / 2.0)), 0, height - ih);
  return {double(x), double(y), double(iw), double(ih)};
}

void paint(Image& img, const Rect& r, const Texture& tex, std::vector<std::uint8_t>* mask = nullptr) {
  const int x0 = static_cast<int>(r.x), y0 = static_cast<int>(r.y);
  const int w = static_cast<int>(r.w), h = static_cast<int>(r.h);
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x) {
      const Color c = tex.at((x - x0 + 0.5) / w, (y - y0 + 0.5) / h);
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
      if (mask) (*mask)[static_cast<std::size_t>(y) * img.width + x] = 1;
    }
}

Image make_background(int width, int height, Rng& rng) {
  Image bg(width, height);
  std::uniform_real_distribution<double> base(0.3, 0.7), freq(0.01, 0.08), ph(0, 2 * std::numbers::pi);
  std::normal_distribution<double> grain(0.0, 0.02);
  for (int c = 0; c < 3; ++c) {
    const double b = base(rng);
    std::array<std::array<double, 3>, 3> waves;
    for (auto& wv : waves) wv = {freq(rng), freq(rng), ph(rng)};
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = b;
        for (const auto& wv : waves) v += 0.06 * std::sin(wv[0] * x + wv[1] * y + wv[2]);
        bg.at(c, y, x) = static_cast<float>(std::clamp(v + grain(rng), 0.0, 1.0));
      }
  }
  return bg;
}

void motion_blur(Image& img, bool horizontal) {
  constexpr int kHalf = 2;
  const Image src = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double s = 0.0;
        int n = 0;
        for (int d = -kHalf; d <= kHalf; ++d) {
          const int xx = horizontal ? x + d : x, yy = horizontal ? y : y + d;
          if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) continue;
          s += src.at(c, yy, xx);
          ++n;
        }
        img.at(c, y, x) = static_cast<float>(s / n);
      }
}

}  // namespace

Sequence generate_sequence(const SequenceSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Sequence seq;
  seq.name = spec.name;
  seq.attributes = spec.attributes;
  auto has = [&](Attribute a) { return spec.attributes.count(a) > 0 && !spec.zero_motion; };

  constexpr int kPad = 32;
  const Image background = make_background(spec.width + 2 * kPad, spec.height + 2 * kPad, rng);
  const double cam_speed = spec.zero_motion ? 0.0 : spec.camera_speed;
  Mover camera = random_mover(cam_speed, 2 * kPad + 2, 2 * kPad + 2, 0.0, 0.0, rng);
  const Texture target_tex = random_texture(rng);
  Mover target = random_mover(spec.zero_motion ? 0.0 : spec.speed, spec.width, spec.height,
                              spec.target_w * 1.3, spec.target_h * 1.3, rng);
  std::uniform_real_distribution<double> ph(0, 2 * std::numbers::pi), period(30, 60);
  const double scale_phase = ph(rng), scale_period = period(rng);
  const double deform_phase = ph(rng), deform_period = period(rng);

  std::vector<std::pair<Mover, Texture>> distractors;
  if (has(Attribute::background_clutter)) {
    for (int k = 0; k < 3; ++k) {
      Texture t = target_tex;
      std::swap(t.c1, t.c2);
      t.phase += 1.0 + k;
      distractors.push_back({random_mover(spec.speed * 0.7, spec.width, spec.height, spec.target_w,
                                          spec.target_h, rng), t});
    }
  }

  int occ_start = -1, occ_len = 0;
  Texture occ_tex{{0.5f, 0.5f, 0.5f}, {0.35f, 0.35f, 0.35f}, {0.45f, 0.45f, 0.45f}, 0.0, 3.0, 0.0};
  if (has(Attribute::occlusion)) {
    occ_len = std::max(6, spec.length / 6);
    std::uniform_int_distribution<int> start(spec.length / 4, std::max(spec.length / 4, spec.length / 2));
    occ_start = std::min(start(rng), std::max(0, spec.length - occ_len));
  }
  std::normal_distribution<double> grain(0.0, 0.01);

  for (int t = 0; t < spec.length; ++t) {
    double w = spec.target_w, h = spec.target_h;
    if (has(Attribute::scale_variation)) {
      const double s = 1.0 + 0.3 * std::sin(2 * std::numbers::pi * t / scale_period + scale_phase);
      w *= s;
      h *= s;
    }
    if (has(Attribute::deformation)) {
      const double a = 1.0 + 0.3 * std::sin(2 * std::numbers::pi * t / deform_period + deform_phase);
      w *= std::sqrt(a);
      h /= std::sqrt(a);
    }
    if (t > 0) target.step(w, h, spec.width, spec.height);
    const Rect box = integer_box(target.cx, target.cy, w, h, spec.width, spec.height);

    if (t > 0) camera.step(0.0, 0.0, 2 * kPad + 2, 2 * kPad + 2);
    Image frame(spec.width, spec.height);
    {
      const int ox = static_cast<int>(std::lround(camera.cx)) - 1, oy = static_cast<int>(std::lround(camera.cy)) - 1;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < spec.height; ++y)
          for (int x = 0; x < spec.width; ++x) frame.at(c, y, x) = background.at(c, y + oy, x + ox);
    }
    for (auto& [m, tex] : distractors) {
      if (t > 0) m.step(spec.target_w, spec.target_h, spec.width, spec.height);
      paint(frame, integer_box(m.cx, m.cy, spec.target_w, spec.target_h, spec.width, spec.height), tex);
    }
    std::vector<std::uint8_t> mask;
    if (spec.keep_masks) mask.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
    paint(frame, box, target_tex, spec.keep_masks ? &mask : nullptr);

    std::optional<Rect> occluder;
    if (occ_start >= 0 && t >= occ_start && t < occ_start + occ_len) {
      // slides across the target, fully covering it mid-way
      const double f = occ_len > 1 ? static_cast<double>(t - occ_start) / (occ_len - 1) : 0.5;
      const double ow = std::ceil(box.w * 1.2), oh = std::ceil(box.h * 1.4);
      const double travel = (ow + box.w) / 2 + 2;
      const double ocx = box.x + box.w / 2 + (2 * f - 1) * travel;
      occluder = Rect{std::round(ocx - ow / 2), std::round(box.y + box.h / 2 - oh / 2), ow, oh};
      paint(frame, *occluder, occ_tex);
    }
    if (has(Attribute::motion_blur)) motion_blur(frame, std::abs(target.vx) >= std::abs(target.vy));
    for (float& p : frame.pixels) p = static_cast<float>(std::clamp(p + grain(rng), 0.0, 1.0));

    if (spec.keep_masks) seq.masks.push_back(std::move(mask));
    seq.frames.push_back(std::move(frame));
    seq.gt.push_back(box);
    seq.occluders.push_back(occluder);
  }
  return seq;
}

std::vector<Sequence> generate_corpus(const SequenceSpec& base, int count, const std::string& prefix) {
  if (count < 1) throw ContractError("synth: count must be positive");
  std::vector<Sequence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    SequenceSpec s = base;
    char name[32];
    std::snprintf(name, sizeof name, "%03d", k);
    s.name = prefix + name;
    s.seed = base.seed + static_cast<std::uint64_t>(k);
    if (base.attributes.empty() && k % 2 == 1) s.attributes = {static_cast<Attribute>(k % 5)};
    out.push_back(generate_sequence(s));
  }
  return out;
}

// ---- IO -------------------------------------------------------------------

std::vector<Rect> read_boxes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open box file " + path.string());
  std::vector<Rect> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream ss(line);
    Rect r;
    std::string extra;
    if (!(ss >> r.x >> r.y >> r.w >> r.h) || (ss >> extra)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed box line");
    }
    if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.w) || !std::isfinite(r.h)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite box");
    }
    boxes.push_back(r);
  }
  return boxes;
}

void write_boxes(const fs::path& path, const std::vector<Rect>& boxes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  for (const auto& r : boxes) out << r.x << ',' << r.y << ',' << r.w << ',' << r.h << '\n';
}

void write_sequence_dir(const fs::path& root, const Sequence& seq) {
  const fs::path dir = root / seq.name;
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i + 1);
    write_image(dir / "img" / name, seq.frames[i]);
  }
  write_boxes(dir / "groundtruth_rect.txt", seq.gt);
  std::ofstream attrs(dir / "attributes.txt");
  bool first = true;
  for (Attribute a : seq.attributes) {
    attrs << (first ? "" : ",") << to_string(a);
    first = false;
  }
  attrs << '\n';
}

Sequence load_sequence_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir.string());
  const fs::path gt_path = dir / "groundtruth_rect.txt";
  if (!fs::exists(gt_path)) throw DataError("missing ground truth file " + gt_path.string());
  Sequence seq;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  seq.gt = read_boxes(gt_path);

  std::vector<fs::path> images;
  if (fs::is_directory(dir / "img")) {
    for (const auto& e : fs::directory_iterator(dir / "img")) {
      const auto ext = e.path().extension().string();
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") images.push_back(e.path());
    }
  }
  std::sort(images.begin(), images.end());
  if (images.size() != seq.gt.size()) {
    throw DataError(dir.string() + ": " + std::to_string(images.size()) + " frames but " +
                    std::to_string(seq.gt.size()) + " ground-truth boxes");
  }
  for (const auto& p : images) seq.frames.push_back(read_image(p));
  seq.occluders.assign(seq.frames.size(), std::nullopt);

  std::ifstream attrs(dir / "attributes.txt");
  std::string tag;
  while (attrs && std::getline(attrs, tag, ',')) {
    tag.erase(std::remove_if(tag.begin(), tag.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }),
              tag.end());
    if (!tag.empty()) seq.attributes.insert(parse_attribute(tag));
  }
  return seq;
}

std::vector<Sequence> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "groundtruth_rect.txt")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no sequences under " + root.string());
  std::vector<Sequence> out;
  for (const auto& d : dirs) out.push_back(load_sequence_dir(d));
  return out;
}

// ---- triplets -------------------------------------------------------------

void TripletConfig::validate() const {
  if (window < 2) throw ContractError("triplets: window must be at least 2");
  if (!(noise_sigma >= 0.0)) throw ContractError("triplets: noise_sigma must be >= 0");
  if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) throw ContractError("triplets: noise_prob must lie in [0, 1]");
  if (!(search_shift >= 0.0 && search_shift < 0.5)) throw ContractError("triplets: search_shift must lie in [0, 0.5)");
  if (!(search_scale_jitter >= 0.0 && search_scale_jitter < 1.0)) {
    throw ContractError("triplets: search_scale_jitter must lie in [0, 1)");
  }
  if (!(negative_prob >= 0.0 && negative_prob < 1.0)) throw ContractError("triplets: negative_prob must lie in [0, 1)");
}

TripletIndices sample_triplet_indices(int length, const TripletConfig& cfg, Rng& rng) {
  cfg.validate();
  if (length < cfg.window) {
    throw DataError("triplets: sequence of " + std::to_string(length) + " frames is shorter than the " +
                    std::to_string(cfg.window) + "-frame window");
  }
  TripletIndices idx;
  idx.window_start = std::uniform_int_distribution<int>(0, length - cfg.window)(rng);
  const int last = idx.window_start + cfg.window - 1;
  idx.i = std::uniform_int_distribution<int>(idx.window_start, last)(rng);
  idx.a = std::uniform_int_distribution<int>(idx.window_start, last - 1)(rng);
  idx.c = idx.a + 1;
  idx.s = cfg.search_from_successor && idx.c + 1 < length ? idx.c + 1 : idx.c;
  return idx;
}

namespace {

Tensor template_crop(const Sequence& seq, int frame, const ModelConfig& g) {
  const CenterBox b = to_center(seq.gt[frame]);
  return crop_square(seq.frames[frame], b.cx, b.cy, template_side(b.w, b.h, g.context),
                     g.backbone.template_size)
      .patch;
}

void maybe_add_noise(Tensor& t, const TripletConfig& cfg, Rng& rng) {
  if (!std::bernoulli_distribution(cfg.noise_prob)(rng)) return;
  std::normal_distribution<double> n(0.0, cfg.noise_sigma);
  for (double& v : t.data()) v += n(rng);
}

void search_crop(const Sequence& seq, int frame, const ModelConfig& geometry, const TripletConfig& cfg, Rng& rng,
                 TrainingSample& s) {
  const CenterBox gt = to_center(seq.gt[frame]);
  const int out = geometry.backbone.search_size;
  std::uniform_real_distribution<double> shift(-cfg.search_shift, cfg.search_shift);
  std::uniform_real_distribution<double> jitter(-cfg.search_scale_jitter, cfg.search_scale_jitter);
  const double side = template_side(gt.w, gt.h, geometry.context) * geometry.search_ratio() * (1.0 + jitter(rng));
  const double dx = shift(rng) * side, dy = shift(rng) * side;
  const double cx = gt.cx - dx, cy = gt.cy - dy;
  s.search = crop_square(seq.frames[frame], cx, cy, side, out).patch;
  const double k = out / side;
  s.search_gt = {out / 2.0 + dx * k, out / 2.0 + dy * k, gt.w * k, gt.h * k};
}

}  // namespace

TrainingSample make_training_sample(const Sequence& seq, const TripletIndices& idx,
                                    const ModelConfig& geometry, const TripletConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(seq.size());
  for (int k : {idx.i, idx.a, idx.c, idx.s})
    if (k < 0 || k >= n) throw DataError("triplets: frame index " + std::to_string(k) + " out of range");
  TrainingSample s;
  s.idx = idx;
  s.t_i = template_crop(seq, idx.i, geometry);
  s.t_a = template_crop(seq, idx.a, geometry);
  s.t_c = template_crop(seq, idx.c, geometry);
  maybe_add_noise(s.t_a, cfg, rng);
  maybe_add_noise(s.t_c, cfg, rng);

  search_crop(seq, idx.s, geometry, cfg, rng, s);
  return s;
}

void make_negative(TrainingSample& s, const Sequence& other, int frame, const ModelConfig& geometry,
                   const TripletConfig& cfg, Rng& rng) {
  if (frame < 0 || frame >= static_cast<int>(other.size())) {
    throw DataError("triplets: frame index " + std::to_string(frame) + " out of range");
  }
  search_crop(other, frame, geometry, cfg, rng, s);
  s.negative = true;
}

}  // namespace dast

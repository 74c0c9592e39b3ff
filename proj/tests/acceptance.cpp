// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. One line per criterion:
//
//   AC<n> PASS|FAIL <summary> (<seconds>)
//
// Usage: acceptance [criterion ...]    e.g. `acceptance 1 2 9`
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dast/config.hpp"
#include "dast/eval.hpp"
#include "dast/tracker.hpp"
#include "dast/training.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dast;
using testing_support::grad_check_slots;
using testing_support::probe_loss;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failures; the first few are kept for the report line.
struct Outcome {
  long checks = 0;
  long failures = 0;
  std::vector<std::string> notes;
  std::string summary;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (notes.size() < 3) notes.push_back(what);
  }
  bool passed() const { return failures == 0 && checks > 0; }
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: gradients ----------------------------------------------------------

Outcome gradient_suite() {
  Outcome out;
  std::map<std::string, int> instances;
  double worst = 0.0;
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    ++instances[name];
    worst = std::max(worst, r.max_error);
    out.expect(r.passed, fmt("%s err %.2e", name.c_str(), r.max_error));
  };
  auto one = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    record(name, grad_check(f, x, 1e-5, 1e-4));
  };

  for (int t = 0; t < 20; ++t) {
    Rng rng(5000 + t);
    std::uniform_int_distribution<int> d(1, 5), side(3, 7), kern(1, 3), st(1, 2), pd(0, 1);
    const std::size_t m = d(rng), k = d(rng), n = d(rng);

    Tensor a = Tensor::randn({m, k}, rng), b = Tensor::randn({k, n}, rng);
    one("matmul", [&](const Tensor& x) { return probe_loss(matmul(x, b)); }, a);
    one("matmul", [&](const Tensor& x) { return probe_loss(matmul(a, x)); }, b);
    one("transpose", [&](const Tensor& x) { return probe_loss(transpose(x)); }, a);
    one("softmax_rows", [&](const Tensor& x) { return probe_loss(softmax_rows(x)); }, a);

    const std::size_t cin = d(rng), cout = d(rng), h = side(rng), w = side(rng);
    const std::size_t kh = kern(rng), kw = kern(rng), stride = st(rng), pad = pd(rng);
    Tensor img = Tensor::randn({cin, h, w}, rng), ker = Tensor::randn({cout, cin, kh, kw}, rng);
    Tensor bias = Tensor::randn({cout}, rng);
    record("conv2d", grad_check_slots({&img, &ker, &bias},
                                      [&] { return probe_loss(conv2d(img, ker, bias, stride, pad)); }));

    Tensor tok = Tensor::randn({m, k}, rng), wl = Tensor::randn({k, k}, rng), bl = Tensor::randn({k}, rng);
    record("linear", grad_check_slots({&tok, &wl, &bl}, [&] { return probe_loss(linear(tok, wl, bl)); }));

    Tensor e1 = Tensor::randn({m, n}, rng), e2 = Tensor::randn({m, n}, rng);
    record("add", grad_check_slots({&e1, &e2}, [&] { return probe_loss(add(e1, e2)); }));
    record("sub", grad_check_slots({&e1, &e2}, [&] { return probe_loss(sub(e1, e2)); }));
    record("mul", grad_check_slots({&e1, &e2}, [&] { return probe_loss(mul(e1, e2)); }));
    one("relu", [&](const Tensor& x) { return probe_loss(relu(x)); }, e1);
    one("scale", [&](const Tensor& x) { return probe_loss(scale(x, -1.7)); }, e1);
    one("add_scalar", [&](const Tensor& x) { return probe_loss(add_scalar(x, 0.3)); }, e1);
    one("exp", [&](const Tensor& x) { return probe_loss(exp(x)); }, e1);
    one("log", [&](const Tensor& x) { return probe_loss(log(x)); }, Tensor::uniform({m, n}, rng, 0.5, 2.0));
    one("sum", [&](const Tensor& x) { return sum(mul(x, x)); }, e1);
    one("mean", [&](const Tensor& x) { return mean(mul(x, x)); }, e1);
    one("reshape", [&](const Tensor& x) { return probe_loss(reshape(x, {n, m})); }, e1);
    one("to_tokens", [&](const Tensor& x) { return probe_loss(to_tokens(x)); }, img);
    one("from_tokens", [&](const Tensor& x) { return probe_loss(from_tokens(x, h, w)); },
        Tensor::randn({h * w, cin}, rng));
    one("to_network_input", [&](const Tensor& x) { return probe_loss(to_network_input(x)); },
        Tensor::uniform({3, 4, 4}, rng, 0.0, 1.0));

    Tensor z = Tensor::randn({2, 3, 2}, rng), sx = Tensor::randn({2, 5, 6}, rng);
    record("cross_correlate", grad_check_slots({&z, &sx}, [&] { return probe_loss(cross_correlate(z, sx)); }));
    one("center_channels", [&](const Tensor& x) { return probe_loss(center_channels(x)); },
        Tensor::randn({3, 3, 4}, rng));

    Projection proj = Projection::init(3, t % 2 == 1, rng);
    Tensor qs = Tensor::randn({4, 3}, rng), ks = Tensor::randn({5, 3}, rng), vs = Tensor::randn({5, 3}, rng);
    std::vector<Tensor*> attn_slots{&qs, &ks, &vs, &proj.w_q, &proj.w_k, &proj.w_v};
    if (proj.has_bias()) attn_slots.insert(attn_slots.end(), {&proj.b_q, &proj.b_k, &proj.b_v});
    record("attend", grad_check_slots(attn_slots, [&] { return probe_loss(attend(qs, ks, vs, proj).output); }));

    Tensor filt = make_filter(3, false, rng), fx = Tensor::randn({3, 2, 3}, rng);
    record("apply_filter", grad_check_slots({&fx, &filt}, [&] { return probe_loss(apply_filter(fx, filt)); }));

    HeadParams hp = HeadParams::init(3, 4, 2, rng);
    for (Branch* br : {&hp.cls1, &hp.cls2, &hp.reg}) {
      br->b1 = Tensor::uniform(br->b1.shape(), rng, 0.1, 0.3);
      br->w2 = Tensor::randn(br->w2.shape(), rng, 0.5);
    }
    Tensor resp = Tensor::randn({3, 3, 2}, rng);
    std::vector<Tensor*> head_slots{&resp};
    for (Branch* br : {&hp.cls1, &hp.cls2, &hp.reg})
      head_slots.insert(head_slots.end(), {&br->w1, &br->b1, &br->w2, &br->b2});
    record("head_forward", grad_check_slots(head_slots, [&] {
             HeadOutput o = head_forward(resp, hp);
             return add(add(probe_loss(o.cls1, 1), probe_loss(o.cls2, 2)), probe_loss(o.reg, 3));
           }));

    AnchorConfig ac;
    ac.ratios = {0.5, 1.0, 2.0};
    AnchorGrid g = generate_anchors(ac, 4, 4, 31.5);
    LabelConfig lc;
    lc.mode = t % 2 ? Assignment::iou : Assignment::center;
    lc.iou_pos = 0.5;
    const LabelTargets targets = build_targets(g, CenterBox{44, 47, 30, 26}, lc);
    Tensor l1 = Tensor::randn({6, 4, 4}, rng), l2 = Tensor::randn({3, 4, 4}, rng);
    Tensor reg = Tensor::randn({12, 4, 4}, rng, 0.7);
    one("cls1_loss", [&](const Tensor& x) { return cls1_loss(x, targets); }, l1);
    one("cls2_loss", [&](const Tensor& x) { return cls2_loss(x, targets); }, l2);
    one("smooth_l1", [&](const Tensor& x) { return smooth_l1(x, Tensor::zeros(x.shape())); },
        Tensor::randn({5, 4}, rng, 1.5));
    one("gather_positive", [&](const Tensor& x) { return probe_loss(gather_positive(x, targets)); }, reg);
    const LossWeights lw{0.3 + t * 0.1, 1.5 - t * 0.05};
    record("total_loss", grad_check_slots({&l1, &l2, &reg}, [&] {
             return compute_losses(HeadOutput{l1, l2, reg}, targets, lw).total;
           }));

    BackboneConfig bc;
    bc.channels = {2, 3};
    bc.feature_channels = 2;
    bc.total_stride = 4;
    bc.template_size = 15;
    bc.search_size = 23;
    BackboneParams bp = BackboneParams::init(bc, rng);
    for (auto& bb : bp.biases) bb = Tensor::uniform(bb.shape(), rng, 0.05, 0.2);
    Tensor bimg = Tensor::uniform({3, 15, 15}, rng, -0.5, 0.5);
    std::vector<Tensor*> bb_slots{&bimg};
    for (auto& kk : bp.kernels) bb_slots.push_back(&kk);
    for (auto& bb : bp.biases) bb_slots.push_back(&bb);
    record("backbone", grad_check_slots(bb_slots, [&] { return probe_loss(extract_features(bimg, bp, bc)); }));

    // full ST module, non-zero filter so every parameter matters
    AttentionParams sp = AttentionParams::init(3, t % 2 == 1, rng, false);
    if (sp.proj.has_bias()) {
      sp.proj.b_q = Tensor::randn({3}, rng, 0.1);
      sp.proj.b_k = Tensor::randn({3}, rng, 0.1);
      sp.proj.b_v = Tensor::randn({3}, rng, 0.1);
    }
    TemplateTriple tr{Tensor::randn({3, 2, 2}, rng), Tensor::randn({3, 2, 2}, rng), Tensor::randn({3, 2, 2}, rng)};
    std::vector<Tensor*> st_slots{&sp.proj.w_q, &sp.proj.w_k, &sp.proj.w_v, &sp.filter, &tr.f_i, &tr.f_a, &tr.f_c};
    if (sp.proj.has_bias()) st_slots.insert(st_slots.end(), {&sp.proj.b_q, &sp.proj.b_k, &sp.proj.b_v});
    record("ST module", grad_check_slots(st_slots, [&] { return probe_loss(st_fuse(tr, sp)); }));

    DaParams dp = DaParams::init(3, 1 + t % 2, t % 3 == 0, rng);
    dp.filters.back() = Tensor::randn(dp.filters.back().shape(), rng, 0.3);
    Tensor fz = Tensor::randn({3, 2, 2}, rng), fs = Tensor::randn({3, 3, 2}, rng);
    std::vector<Tensor*> da_slots{&dp.self_attn.w_q,  &dp.self_attn.w_k,  &dp.self_attn.w_v,
                                  &dp.cross_attn.w_q, &dp.cross_attn.w_k, &dp.cross_attn.w_v,
                                  &fz,                &fs};
    if (dp.self_attn.has_bias())
      da_slots.insert(da_slots.end(), {&dp.self_attn.b_q, &dp.self_attn.b_k, &dp.self_attn.b_v,
                                       &dp.cross_attn.b_q, &dp.cross_attn.b_k, &dp.cross_attn.b_v});
    for (auto& f : dp.filters) da_slots.push_back(&f);
    record("DA module", grad_check_slots(da_slots, [&] { return probe_loss(da_augment(fz, fs, dp)); }));
  }

  int fewest = 1 << 30;
  for (const auto& [name, count] : instances) fewest = std::min(fewest, count);
  out.expect(fewest >= 20, fmt("only %d instances of some op", fewest));
  out.summary = fmt("%zu ops incl. ST and DA, >= %d instances each, worst rel err %.2e", instances.size(), fewest,
                    worst);
  return out;
}

// ---- 2: attention rows -----------------------------------------------------

Outcome attention_rows() {
  Outcome out;
  double worst = 0.0;
  auto rows = [&](const Tensor& a, const char* what) {
    for (std::size_t i = 0; i < a.dim(0); ++i) {
      double s = 0.0;
      bool nonneg = true;
      for (std::size_t j = 0; j < a.dim(1); ++j) {
        s += a.at(i, j);
        nonneg &= a.at(i, j) >= 0.0;
      }
      worst = std::max(worst, std::abs(s - 1.0));
      out.expect(nonneg && std::abs(s - 1.0) <= 1e-6, fmt("%s row %zu sums to %.9f", what, i, s));
    }
  };
  Rng rng(2002);
  std::uniform_int_distribution<int> d(1, 6), side(1, 5);
  std::uniform_real_distribution<double> logspread(-3, 4);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = d(rng);
    const double spread = std::exp(logspread(rng));
    AttentionParams sp = AttentionParams::init(c, t % 2 == 0, rng);
    DaParams dp = DaParams::init(c, 1, t % 3 == 0, rng);
    Tensor fa = Tensor::randn({c, std::size_t(side(rng)), std::size_t(side(rng))}, rng, spread);
    Tensor fc = Tensor::randn(fa.shape(), rng, spread);
    Tensor fs = Tensor::randn({c, std::size_t(side(rng)), std::size_t(side(rng))}, rng, spread);
    rows(encode(fa, fc, sp).attention, "ST");
    DecodeResult r = decode(fa, fs, dp);
    rows(r.self_attention, "DA self");
    rows(r.cross_attention, "DA cross");
  }
  out.summary = fmt("1000 inputs, ST + DA self/cross, max |row sum - 1| %.1e", worst);
  return out;
}

// ---- 3: residual identity --------------------------------------------------

Outcome residual_identity() {
  Outcome out;
  Rng rng(3003);
  std::uniform_int_distribution<int> d(1, 6), side(1, 6);
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = d(rng);
    AttentionParams sp = AttentionParams::init(c, t % 2 == 0, rng);
    DaParams dp = DaParams::init(c, 1 + t % 2, t % 3 == 0, rng);
    const std::size_t h = side(rng), w = side(rng);
    TemplateTriple tr{Tensor::randn({c, h, w}, rng, 3.0), Tensor::randn({c, h, w}, rng, 3.0),
                      Tensor::randn({c, h, w}, rng, 3.0)};
    Tensor fs = Tensor::randn({c, std::size_t(side(rng)) + 1, std::size_t(side(rng)) + 1}, rng, 3.0);
    out.expect(equal_exact(st_fuse(tr, sp), tr.f_i), fmt("st_fuse != f_i at instance %d", t));
    out.expect(equal_exact(da_augment(tr.f_i, fs, dp), fs), fmt("da_augment != f_s at instance %d", t));
  }
  // and through the freshly initialised desk model
  Model m = Model::init(ModelConfig{}, 7);
  const std::size_t c = m.cfg.backbone.feature_channels;
  for (int t = 0; t < 20; ++t) {
    TemplateTriple tr{Tensor::randn({c, 7, 7}, rng), Tensor::randn({c, 7, 7}, rng), Tensor::randn({c, 7, 7}, rng)};
    Tensor fs = Tensor::randn({c, 15, 15}, rng);
    out.expect(equal_exact(fuse_template(m, tr), tr.f_i), "model fuse_template != f_i");
    out.expect(equal_exact(augment_search(m, tr.f_i, fs), fs), "model augment_search != f_s");
  }
  out.summary = "220 instances, bit-exact";
  return out;
}

// ---- 4: label assignment ---------------------------------------------------

std::vector<int> as_ints(const LabelTargets& t) {
  std::vector<int> v;
  for (Label l : t.cls1) v.push_back(static_cast<int>(l));
  return v;
}

Outcome label_oracles() {
  Outcome out;
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> side(1, 17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long positives = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    AnchorConfig cfg;
    if (draw % 3 == 1) cfg.ratios = {1.0};
    const int fh = side(rng), fw = side(rng);
    const double ori = 10 + 30 * u(rng);
    AnchorGrid g = generate_anchors(cfg, fh, fw, ori);
    const double extent = ori * 2 + 8 * std::max(fh, fw);
    oracle::OracleBox gt{extent * u(rng), extent * u(rng), 4 + 60 * u(rng), 4 + 60 * u(rng)};
    const double neg = 0.5 * u(rng), pos = neg + (1 - neg) * u(rng);
    const auto iou = as_ints(assign_labels_iou(g, {gt.cx, gt.cy, gt.w, gt.h}, pos, neg));
    out.expect(iou == oracle::oracle_iou_labels(fh, fw, 8, ori, cfg.ratios, cfg.scale, gt, pos, neg),
               fmt("IoU labels differ on %dx%d draw %d", fh, fw, draw));
    const double thr = 9 * u(rng);
    Corners c = to_corners(CenterBox{gt.cx, gt.cy, gt.w, gt.h});
    const auto ctr = as_ints(assign_labels_center_distance(g, c, thr));
    out.expect(ctr == oracle::oracle_center_labels(fh, fw, 8, ori, cfg.ratios.size(), c.x1, c.y1, c.x2, c.y2, thr),
               fmt("center labels differ on %dx%d draw %d", fh, fw, draw));
    positives += std::count(iou.begin(), iou.end(), 1) + std::count(ctr.begin(), ctr.end(), 1);
  }
  out.summary = fmt("1000 draws on grids 1..17, %ld positive labels compared", positives);
  return out;
}

// ---- 5: losses -------------------------------------------------------------

Outcome loss_algebra() {
  Outcome out;
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> u(0, 3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double l = u(rng), l1 = u(rng), a = u(rng), b = u(rng), c = u(rng);
    const double expect = l1 * (l * a + b) + c;
    const double s = total_loss(a, b, c, {l, l1});
    const double t = total_loss(Tensor::scalar(a), Tensor::scalar(b), Tensor::scalar(c), {l, l1}).item();
    worst = std::max({worst, std::abs(s - expect), std::abs(t - expect)});
    out.expect(std::abs(s - expect) <= 1e-12 && std::abs(t - expect) <= 1e-12, fmt("tuple %d off", i));
  }
  // the combination inside compute_losses
  Rng trng(5006);
  AnchorGrid g = generate_anchors(AnchorConfig{}, 5, 5, 31.5);
  const LabelTargets targets = build_targets(g, CenterBox{63, 60, 30, 24}, LabelConfig{});
  for (int i = 0; i < 100; ++i) {
    const LossWeights w{u(rng), u(rng)};
    HeadOutput o{Tensor::randn({10, 5, 5}, trng), Tensor::randn({5, 5, 5}, trng), Tensor::randn({20, 5, 5}, trng)};
    const Losses ls = compute_losses(o, targets, w);
    const double expect = w.lambda1 * (w.lambda * ls.cls1.item() + ls.cls2.item()) + ls.reg.item();
    worst = std::max(worst, std::abs(ls.total.item() - expect));
    out.expect(std::abs(ls.total.item() - expect) <= 1e-12, fmt("compute_losses tuple %d off", i));
  }
  std::uniform_real_distribution<double> x(-5, 5);
  std::vector<double> points{0.0, 1.0, -1.0, std::nextafter(1.0, 0.0), std::nextafter(-1.0, 0.0), 0.5, -2.0};
  for (int i = 0; i < 1000; ++i) points.push_back(x(rng));
  for (double p : points) {
    const double expect = std::abs(p) < 1 ? 0.5 * p * p : std::abs(p) - 0.5;
    out.expect(smooth_l1_scalar(p) == expect, fmt("smooth_l1_scalar(%g)", p));
    out.expect(smooth_l1(Tensor({1, 1}, {p}), Tensor({1, 1}, {0.0})).item() == expect, fmt("smooth_l1(%g)", p));
  }
  out.summary = fmt("200 weight tuples, max dev %.1e; smooth-L1 exact at %zu points", worst, points.size());
  return out;
}

// ---- 6: metrics ------------------------------------------------------------

Outcome metric_oracles() {
  Outcome out;
  std::mt19937_64 rng(6006);
  std::uniform_int_distribution<int> n(1, 80), grid(0, 20), pick(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0), err(0.0, 60.0);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> ious(static_cast<std::size_t>(n(rng))), errors(ious.size());
    for (double& v : ious) {
      const int p = pick(rng);
      v = p == 0 ? grid(rng) / 20.0 : (p == 1 ? u(rng) : 0.0);
    }
    for (double& e : errors) e = pick(rng) == 0 ? std::floor(err(rng)) : err(rng);
    out.expect(success_auc(ious) == oracle::success_auc(ious), fmt("auc list %d", k));
    out.expect(precision_at(errors) == oracle::precision(errors, 20.0), fmt("precision list %d", k));
    const AoSr a = ao_sr(ious);
    out.expect(a.ao == oracle::average_overlap(ious), fmt("ao list %d", k));
    out.expect(a.sr50 == oracle::success_rate(ious, 0.5), fmt("sr50 list %d", k));
    out.expect(a.sr75 == oracle::success_rate(ious, 0.75), fmt("sr75 list %d", k));
  }
  SequenceSpec spec;
  spec.length = 30;
  const Sequence q = generate_sequence(spec);
  const Metrics m = evaluate(RunResult::make(q.name, q.gt, q.gt));
  out.expect(m.auc == 20.0 / 21.0, fmt("perfect AUC %.17g", m.auc));
  out.expect(m.precision == 1.0, "perfect precision");
  out.expect(m.ao == 1.0 && m.sr50 == 1.0 && m.sr75 == 1.0, "perfect AO/SR");
  out.summary = fmt("1000 lists exact; perfect tracker AUC %.6f, P %.0f, AO %.0f, SR %.0f/%.0f", m.auc, m.precision,
                    m.ao, m.sr50, m.sr75);
  return out;
}

// ---- 7, 8: trained trackers ------------------------------------------------

struct Trained {
  Model model;
  double seconds = 0.0;
};

const std::vector<Sequence>& desk_corpus() {
  static const std::vector<Sequence> corpus = [] {
    const Settings s;
    return generate_corpus(s.synth.train_spec(), s.synth.train_count, "train");
  }();
  return corpus;
}

Trained train_desk(bool full, std::uint64_t seed, const std::vector<Sequence>& data) {
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.use_st = mc.use_da = full;
  TrainConfig tc;
  tc.seed = seed;
  tc.labels.mode = full ? Assignment::center : Assignment::iou;
  Model m = Model::init(mc, seed);
  Trainer(m, tc, data).run();
  return {std::move(m), since(t0)};
}

std::vector<double> track_ious(const Model& m, const Sequence& q) {
  const Tracker trk(m, TrackerConfig{});
  std::vector<Rect> pred;
  for (const auto& f : track_frames(trk, q.frames, q.gt.front())) pred.push_back(f.box);
  return RunResult::make(q.name, pred, q.gt).ious;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::optional<Trained> g_full;

Outcome tracker_sanity() {
  Outcome out;
  const std::vector<Sequence>& data = desk_corpus();
  g_full = train_desk(true, 1, data);
  SequenceSpec spec;
  spec.name = "linear";
  spec.seed = 7000;
  spec.length = 100;
  spec.camera_speed = 0.0;
  const Sequence q = generate_sequence(spec);
  const auto t1 = Clock::now();
  const auto ious = track_ious(g_full->model, q);
  const double track_s = since(t1);
  const double miou = mean_of(ious);
  int lost = 0;
  for (std::size_t t = 6; t < ious.size(); ++t) lost += ious[t] == 0.0;
  out.expect(q.size() == 100, "sequence length");
  out.expect(miou >= 0.5, fmt("mean IoU %.4f", miou));
  out.expect(lost == 0, fmt("%d lost frames after frame 5", lost));
  out.expect(track_s < 300.0, fmt("tracking took %.0f s", track_s));
  out.summary = fmt("mean IoU %.4f, lost frames after 5: %d, train %.0f s + track %.1f s", miou, lost,
                    g_full->seconds, track_s);
  return out;
}

std::vector<Sequence> benchmark(std::uint64_t base_seed) {
  const std::vector<Attribute> attrs{Attribute::deformation, Attribute::occlusion, Attribute::scale_variation,
                                     Attribute::background_clutter, Attribute::motion_blur};
  std::vector<Sequence> out;
  for (int k = 0; k < 10; ++k) {
    SequenceSpec s;
    s.name = fmt("bench%02d", k);
    s.seed = base_seed + static_cast<std::uint64_t>(k);
    if (k % 2) s.attributes = {attrs[static_cast<std::size_t>(k) % 5]};
    out.push_back(generate_sequence(s));
  }
  return out;
}

double benchmark_iou(const Model& m, const std::vector<Sequence>& bench) {
  std::vector<double> per_seq;
  for (const auto& q : bench) per_seq.push_back(mean_of(track_ious(m, q)));
  return mean_of(per_seq);
}

Outcome directional_ablation() {
  Outcome out;
  const std::vector<Sequence>& data = desk_corpus();
  if (!g_full) g_full = train_desk(true, 1, data);
  const Trained base = train_desk(false, 1, data);
  const auto bench = benchmark(1000);
  const double full_iou = benchmark_iou(g_full->model, bench), base_iou = benchmark_iou(base.model, bench);
  if (full_iou > base_iou) {
    out.expect(true, "");
    out.summary = fmt("{ST+DA, center} %.4f > {none, IoU} %.4f on 10 fixed sequences", full_iou, base_iou);
    return out;
  }
  // repeat over 5 seed sets: training seed and benchmark seeds both move
  int wins = 0;
  std::string detail;
  for (std::uint64_t j = 1; j <= 5; ++j) {
    const auto b = benchmark(1000 + 100 * j);
    const double f = benchmark_iou(train_desk(true, 1 + j, data).model, b);
    const double n = benchmark_iou(train_desk(false, 1 + j, data).model, b);
    wins += f > n;
    detail += fmt(" %.3f/%.3f", f, n);
  }
  out.expect(wins >= 4, fmt("held in %d of 5 seed sets", wins));
  out.summary = fmt("default set %.4f <= %.4f; seed sets (full/base):%s, %d of 5", full_iou, base_iou,
                    detail.c_str(), wins);
  return out;
}

// ---- 9: training mechanics -------------------------------------------------

Outcome training_mechanics() {
  Outcome out;
  SequenceSpec spec;
  spec.length = 52;
  spec.seed = 900;
  const auto data = generate_corpus(spec, 3, "mech");
  Model m = Model::init(ModelConfig{}, 9);
  TrainConfig tc;
  tc.epochs = 3;
  tc.freeze_backbone_epochs = 2;
  tc.steps_per_epoch = 3;
  tc.batch_size = 2;
  Trainer tr(m, tc, data);
  std::vector<Tensor> backbone0, other0;
  for (const Tensor& t : m.backbone_params()) backbone0.push_back(t.clone());
  for (const auto& [name, t] : m.named())
    if (name.rfind("backbone", 0) != 0) other0.push_back(t.clone());
  auto same = [](const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!equal_exact(a[i], b[i])) return false;
    return true;
  };
  auto others = [&] {
    std::vector<Tensor> v;
    for (const auto& [name, t] : m.named())
      if (name.rfind("backbone", 0) != 0) v.push_back(t);
    return v;
  };
  for (int e = 0; e < tc.freeze_backbone_epochs; ++e) {
    tr.run_epoch(e);
    out.expect(same(backbone0, m.backbone_params()), fmt("backbone moved in frozen epoch %d", e));
  }
  out.expect(!same(other0, others()), "nothing trained during the freeze window");
  tr.run_epoch(tc.freeze_backbone_epochs);
  out.expect(!same(backbone0, m.backbone_params()), "backbone did not train after the window");

  const TrainConfig paper = TrainConfig::paper_schedule();
  const SgdConfig sgd = paper.sgd();
  out.expect(sgd.learning_rate(0) == 0.005, fmt("lr(0) = %.17g", sgd.learning_rate(0)));
  out.expect(sgd.learning_rate(paper.epochs - 1) == 0.0005,
             fmt("lr(last) = %.17g", sgd.learning_rate(paper.epochs - 1)));
  for (int e = 1; e < paper.epochs; ++e)
    out.expect(sgd.learning_rate(e) < sgd.learning_rate(e - 1), "lr not decreasing");

  const TripletConfig cfg;
  Rng rng(9009);
  std::uniform_int_distribution<int> len(cfg.window, 400);
  long violations = 0;
  for (int k = 0; k < 100000; ++k) {
    const int n = len(rng);
    const TripletIndices idx = sample_triplet_indices(n, cfg, rng);
    const int lo = idx.window_start, hi = idx.window_start + cfg.window - 1;
    const bool ok = lo >= 0 && hi < n && idx.i >= lo && idx.i <= hi && idx.a >= lo && idx.a <= hi && idx.c >= lo &&
                    idx.c <= hi && idx.c - idx.a == 1 && idx.s == (idx.c + 1 < n ? idx.c + 1 : idx.c);
    violations += !ok;
  }
  out.expect(violations == 0, fmt("%ld triplet violations", violations));
  out.summary = fmt("backbone frozen %d epochs bit-exact; lr %.4g -> %.4g; 1e5 triplets, %ld violations",
                    tc.freeze_backbone_epochs, sgd.learning_rate(0), sgd.learning_rate(paper.epochs - 1), violations);
  return out;
}

// ---- 10: update gate -------------------------------------------------------

Outcome update_gate() {
  Outcome out;
  const Model m = g_full ? g_full->model : Model::init(ModelConfig{}, 10);
  SequenceSpec spec;
  spec.length = 40;
  spec.seed = 1010;
  const Sequence q = generate_sequence(spec);
  const TrackerConfig cfg;
  out.expect(cfg.update_threshold == 1.18, "default threshold");
  const Tracker trk(m, cfg);
  auto copy = [](const TemplateTriple& t) { return TemplateTriple{t.f_i.clone(), t.f_a.clone(), t.f_c.clone()}; };
  auto same = [](const TemplateTriple& a, const TemplateTriple& b) {
    return equal_exact(a.f_i, b.f_i) && equal_exact(a.f_a, b.f_a) && equal_exact(a.f_c, b.f_c);
  };

  TrackState s = trk.init(q.frames[0], q.gt[0]);
  const TemplateTriple before = copy(s.templ);
  for (double conf : {0.0, 0.5, 1.0, 1.17, 1.18}) {
    out.expect(!trk.maybe_update_template(q.frames[5], to_center(q.gt[5]), conf, s), fmt("fired at %.2f", conf));
    out.expect(same(s.templ, before), fmt("templates changed at %.2f", conf));
  }

  // along a real run: any frame at or below the gate leaves the triple alone
  TrackState run = trk.init(q.frames[0], q.gt[0]);
  int gated = 0, fired = 0;
  for (std::size_t t = 1; t < q.size(); ++t) {
    const TemplateTriple prev = copy(run.templ);
    const FrameResult r = trk.track(q.frames[t], run);
    if (r.confidence <= 1.18) {
      ++gated;
      out.expect(!r.updated && same(run.templ, prev), fmt("frame %zu conf %.3f changed templates", t, r.confidence));
    } else {
      ++fired;
      out.expect(r.updated, fmt("frame %zu conf %.3f did not update", t, r.confidence));
    }
  }

  const CenterBox box = to_center(q.gt[8]);
  out.expect(trk.maybe_update_template(q.frames[8], box, 1.19, s), "forced update did not fire");
  const Tensor fresh = image_features(m, trk.crop_template(q.frames[8], box).patch);
  out.expect(!equal_exact(s.templ.f_c, before.f_c), "f_c unchanged by forced update");
  out.expect(equal_exact(s.templ.f_c, fresh), "f_c is not the new frame's features");
  out.expect(equal_exact(s.templ.f_a, fuse_template(m, {before.f_i, before.f_a, fresh})), "f_a is not the ST output");
  out.expect(equal_exact(s.templ.f_i, before.f_i), "f_i changed");
  out.summary = fmt("gate held at 5 probes and %d tracked frames (%d fired); forced update exact", gated, fired);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all{
      {1, gradient_suite},   {2, attention_rows},   {3, residual_identity},    {4, label_oracles},
      {5, loss_algebra},     {6, metric_oracles},   {7, tracker_sanity},       {8, directional_ablation},
      {9, training_mechanics}, {10, update_gate}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [id, run] : all) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = since(t0);
    if (id == 1) o.expect(secs < 120.0, fmt("took %.0f s", secs));
    std::string line = fmt("AC%d %s ", id, o.passed() ? "PASS" : "FAIL") + o.summary;
    for (const auto& n : o.notes) line += "; " + n;
    if (o.failures > 3) line += fmt("; %ld failures in total", o.failures);
    std::printf("%s (%.1f s)\n", line.c_str(), secs);
    std::fflush(stdout);
    failed += !o.passed();
  }
  return failed == 0 ? 0 : 1;
}

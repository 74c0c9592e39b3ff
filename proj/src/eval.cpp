// SPDX-License-Identifier: Apache-2.0

#include "dast/eval.hpp"

#include <fstream>
#include <map>

#include "json.hpp"

namespace dast {

namespace {

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw DataError(std::string(what) + ": empty input");
}

double success_threshold(int k) { return k / 20.0; }

}  // namespace

std::vector<double> success_curve(std::span<const double> ious) {
  require_nonempty(ious.size(), "success_curve");
  std::vector<double> curve(kSuccessThresholds);
  for (int k = 0; k < kSuccessThresholds; ++k) {
    const double t = success_threshold(k);
    std::size_t hits = 0;
    for (double v : ious) hits += v > t;
    curve[k] = static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return curve;
}

double success_auc(std::span<const double> ious) {
  require_nonempty(ious.size(), "success_auc");
  // one division over the summed counts keeps the result exact
  std::size_t hits = 0;
  for (int k = 0; k < kSuccessThresholds; ++k) {
    const double t = success_threshold(k);
    for (double v : ious) hits += v > t;
  }
  return static_cast<double>(hits) / static_cast<double>(ious.size() * kSuccessThresholds);
}

double precision_at(std::span<const double> center_errors, double tau) {
  require_nonempty(center_errors.size(), "precision_at");
  std::size_t hits = 0;
  for (double e : center_errors) hits += e <= tau;
  return static_cast<double>(hits) / static_cast<double>(center_errors.size());
}

std::vector<double> precision_curve(std::span<const double> center_errors, int max_tau) {
  std::vector<double> out;
  for (int t = 0; t <= max_tau; ++t) out.push_back(precision_at(center_errors, t));
  return out;
}

AoSr ao_sr(std::span<const double> ious) {
  require_nonempty(ious.size(), "ao_sr");
  double sum = 0.0;
  std::size_t s50 = 0, s75 = 0;
  for (double v : ious) {
    sum += v;
    s50 += v > 0.5;
    s75 += v > 0.75;
  }
  const double n = static_cast<double>(ious.size());
  return {sum / n, s50 / n, s75 / n};
}

RunResult RunResult::make(std::string sequence, std::vector<Rect> pred, std::vector<Rect> gt,
                          std::set<Attribute> attributes) {
  if (pred.size() != gt.size()) {
    throw DataError(sequence + ": " + std::to_string(pred.size()) + " predicted boxes vs " +
                    std::to_string(gt.size()) + " ground-truth boxes");
  }
  RunResult r;
  r.sequence = std::move(sequence);
  r.attributes = std::move(attributes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r.ious.push_back(compute_iou(pred[i], gt[i]));
    r.center_errors.push_back(center_error(pred[i], gt[i]));
  }
  r.pred = std::move(pred);
  r.gt = std::move(gt);
  return r;
}

Metrics evaluate(const RunResult& r) {
  Metrics m;
  m.auc = success_auc(r.ious);
  m.precision = precision_at(r.center_errors);
  const AoSr a = ao_sr(r.ious);
  m.ao = a.ao;
  m.sr50 = a.sr50;
  m.sr75 = a.sr75;
  m.mean_iou = a.ao;
  return m;
}

Metrics aggregate(const std::vector<Metrics>& per_sequence) {
  require_nonempty(per_sequence.size(), "aggregate");
  Metrics s;
  for (const auto& m : per_sequence) {
    s.auc += m.auc;
    s.precision += m.precision;
    s.ao += m.ao;
    s.sr50 += m.sr50;
    s.sr75 += m.sr75;
    s.mean_iou += m.mean_iou;
  }
  const double n = static_cast<double>(per_sequence.size());
  return {s.auc / n, s.precision / n, s.ao / n, s.sr50 / n, s.sr75 / n, s.mean_iou / n};
}

const ReportRow* Report::aggregate_row(const std::string& config) const {
  for (const auto& r : rows)
    if (r.config == config && r.sequence == "ALL") return &r;
  return nullptr;
}

std::vector<ReportRow> report_rows(const std::string& config, const std::vector<RunResult>& runs) {
  std::vector<ReportRow> rows;
  std::vector<Metrics> all;
  std::map<Attribute, std::vector<Metrics>> by_attr;
  for (const auto& r : runs) {
    const Metrics m = evaluate(r);
    rows.push_back({config, r.sequence, m, false, ""});
    all.push_back(m);
    for (Attribute a : r.attributes) by_attr[a].push_back(m);
  }
  for (const auto& [a, ms] : by_attr) rows.push_back({config, "attr:" + to_string(a), aggregate(ms), false, ""});
  rows.push_back({config, "ALL", aggregate(all), false, ""});
  return rows;
}

namespace {

Metrics minus(const Metrics& a, const Metrics& b) {
  return {a.auc - b.auc, a.precision - b.precision, a.ao - b.ao,
          a.sr50 - b.sr50, a.sr75 - b.sr75, a.mean_iou - b.mean_iou};
}

}  // namespace

Report ablation_report(const std::vector<NamedRunner>& configs, const std::vector<Sequence>& data, int jobs) {
  if (configs.size() < 2) throw ContractError("ablation_report: need at least two configs");
  require_nonempty(data.size(), "ablation_report");
  Report rep;
  for (const auto& cfg : configs) {
    rep.configs.push_back(cfg.name);
    try {
      SequenceRunner run = cfg.make();
      std::function<RunResult(std::size_t)> one = [&](std::size_t i) {
        const Sequence& s = data[i];
        return RunResult::make(s.name, run(s), s.gt, s.attributes);
      };
      auto runs = parallel_map<RunResult>(data.size(), jobs, one);
      for (auto& row : report_rows(cfg.name, runs)) rep.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      ReportRow row;
      row.config = cfg.name;
      row.sequence = "ALL";
      row.failed = true;
      row.error = e.what();
      rep.rows.push_back(row);
    }
  }
  for (std::size_t i = 0; i < configs.size(); ++i)
    for (std::size_t j = i + 1; j < configs.size(); ++j) {
      const ReportRow* a = rep.aggregate_row(configs[i].name);
      const ReportRow* b = rep.aggregate_row(configs[j].name);
      if (!a || !b || a->failed || b->failed) continue;
      rep.deltas.push_back({configs[i].name, configs[j].name, minus(b->m, a->m)});
    }
  return rep;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"auc", m.auc}, {"precision", m.precision}, {"ao", m.ao},
          {"sr50", m.sr50}, {"sr75", m.sr75}, {"mean_iou", m.mean_iou}};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  return out;
}

}  // namespace

void write_report_json(const std::filesystem::path& path, const Report& report) {
  nlohmann::json doc;
  doc["configs"] = report.configs;
  doc["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = metrics_json(r.m);
    row["config"] = r.config;
    row["sequence"] = r.sequence;
    row["failed"] = r.failed;
    if (r.failed) row["error"] = r.error;
    doc["rows"].push_back(row);
  }
  doc["deltas"] = nlohmann::json::array();
  for (const auto& d : report.deltas) {
    nlohmann::json row = metrics_json(d.delta);
    row["from"] = d.from;
    row["to"] = d.to;
    doc["deltas"].push_back(row);
  }
  open_out(path) << doc.dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const Report& report) {
  auto out = open_out(path);
  out << "config,sequence,status,auc,precision,ao,sr50,sr75,mean_iou\n";
  for (const auto& r : report.rows) {
    out << r.config << ',' << r.sequence << ',' << (r.failed ? "failed" : "ok") << ',' << r.m.auc << ','
        << r.m.precision << ',' << r.m.ao << ',' << r.m.sr50 << ',' << r.m.sr75 << ',' << r.m.mean_iou << '\n';
  }
  for (const auto& d : report.deltas) {
    out << d.to << " - " << d.from << ",ALL,delta," << d.delta.auc << ',' << d.delta.precision << ','
        << d.delta.ao << ',' << d.delta.sr50 << ',' << d.delta.sr75 << ',' << d.delta.mean_iou << '\n';
  }
}

void write_curve_csv(const std::filesystem::path& path, std::span<const double> thresholds,
                     std::span<const double> values) {
  if (thresholds.size() != values.size()) throw ContractError("write_curve_csv: length mismatch");
  auto out = open_out(path);
  out << "threshold,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << thresholds[i] << ',' << values[i] << '\n';
}

}  // namespace dast

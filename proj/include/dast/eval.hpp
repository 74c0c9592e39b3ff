// SPDX-License-Identifier: Apache-2.0
//
// Tracking metrics and ablation reports.
//
// Success uses the strict test IoU > t over t = 0, 0.05, ..., 1.0, so even a
// perfect tracker scores 20/21. Precision counts centre errors <= tau.

#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dast/boxes.hpp"
#include "dast/data_synth.hpp"

namespace dast {

inline constexpr int kSuccessThresholds = 21;
inline constexpr double kPrecisionTau = 20.0;

std::vector<double> success_curve(std::span<const double> ious);
double success_auc(std::span<const double> ious);
/// Precision at tau = 0, 1, ..., max_tau.
std::vector<double> precision_curve(std::span<const double> center_errors, int max_tau = 50);
double precision_at(std::span<const double> center_errors, double tau = kPrecisionTau);

struct AoSr {
  double ao = 0, sr50 = 0, sr75 = 0;
};
AoSr ao_sr(std::span<const double> ious);

struct RunResult {
  std::string sequence;
  std::vector<Rect> pred, gt;
  std::vector<double> ious, center_errors;
  std::set<Attribute> attributes;

  static RunResult make(std::string sequence, std::vector<Rect> pred, std::vector<Rect> gt,
                        std::set<Attribute> attributes = {});
};

struct Metrics {
  double auc = 0, precision = 0, ao = 0, sr50 = 0, sr75 = 0, mean_iou = 0;
};

Metrics evaluate(const RunResult& r);
/// Equal weight per sequence.
Metrics aggregate(const std::vector<Metrics>& per_sequence);

struct ReportRow {
  std::string config;
  std::string sequence;  // "ALL" for the aggregate, "attr:<tag>" for breakdowns
  Metrics m;
  bool failed = false;
  std::string error;
};

struct ReportDelta {
  std::string from, to;
  Metrics delta;  // to - from, aggregate rows
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<ReportDelta> deltas;
  std::vector<std::string> configs;

  const ReportRow* aggregate_row(const std::string& config) const;
};

/// Rows for one config: per sequence, per attribute, then ALL.
std::vector<ReportRow> report_rows(const std::string& config, const std::vector<RunResult>& runs);

using SequenceRunner = std::function<std::vector<Rect>(const Sequence&)>;

struct NamedRunner {
  std::string name;
  // Builds the per-sequence runner; may throw, which marks the config failed.
  std::function<SequenceRunner()> make;
};

/// Runs every config on the same sequences. A throwing config yields one
/// failed row and the run continues. Deltas cover every pair (i < j) of
/// successful configs.
Report ablation_report(const std::vector<NamedRunner>& configs, const std::vector<Sequence>& data,
                       int jobs = 1);

void write_report_json(const std::filesystem::path& path, const Report& report);
void write_report_csv(const std::filesystem::path& path, const Report& report);
/// "threshold,value" rows.
void write_curve_csv(const std::filesystem::path& path, std::span<const double> thresholds,
                     std::span<const double> values);

/// Maps f over [0, n) with up to `jobs` threads; results keep index order.
template <class T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& f);

}  // namespace dast

#include "dast/detail/parallel.hpp"

// SPDX-License-Identifier: Apache-2.0
//
// dast: synthesize data, train, track and evaluate.
//
//   dast synth --out data/ --count 4 --len 100 --attr occlusion
//   dast train --out model.json [--data data/] [--assign iou] [--modules none]
//   dast track --model model.json --data data/ --out results/ [--no-update]
//   dast eval  --data data/ --results results/ --out report/
//   dast eval  --data data/ --ablate full=model.json,base=base.json --out report/
//
// Settings come from defaults, then DAST_SEED, then --config, then --set,
// then the dedicated flags. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dast/config.hpp"
#include "dast/eval.hpp"
#include "dast/tracker.hpp"
#include "dast/training.hpp"

using namespace dast;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "settings file (key = value lines)");
  cmd->add_option("--set", c.sets, "override one setting, KEY=VALUE; repeatable");
  cmd->add_option("--seed", c.seed, "seed for data and training");
}

// Seed keys touched by DAST_SEED and --seed.
void apply_seed(Settings& s, std::uint64_t seed) {
  s.train.seed = seed;
  s.synth.spec.seed = seed;
}

Settings resolve(const Common& c) {
  Settings s;
  if (const char* env = std::getenv("DAST_SEED"); env && *env) {
    apply_setting(s, "train.seed", env);
    apply_setting(s, "synth.seed", env);
  }
  if (!c.config.empty()) load_settings_file(c.config, s);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ContractError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) apply_seed(s, *c.seed);
  return s;
}

void apply_modules(ModelConfig& m, const std::string& modules) {
  if (modules.empty()) return;
  if (modules == "all") {
    m.use_st = m.use_da = true;
  } else if (modules == "none") {
    m.use_st = m.use_da = false;
  } else if (modules == "st") {
    m.use_st = true;
    m.use_da = false;
  } else if (modules == "da") {
    m.use_st = false;
    m.use_da = true;
  } else {
    throw ContractError("--modules must be one of none, all, st, da; got '" + modules + "'");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  std::optional<int> count, length;
  std::string attrs;
  bool zero_motion = false;
  std::string prefix = "seq";
};

int run_synth(const SynthArgs& a) {
  Settings s = resolve(a.common);
  if (a.count) s.synth.count = *a.count;
  if (a.length) s.synth.spec.length = *a.length;
  if (!a.attrs.empty()) apply_setting(s, "synth.attributes", a.attrs);
  if (a.zero_motion) s.synth.spec.zero_motion = true;
  s.validate();
  for (const Sequence& q : generate_corpus(s.synth.spec, s.synth.count, a.prefix)) {
    write_sequence_dir(a.out, q);
    std::cerr << "wrote " << (fs::path(a.out) / q.name).string() << " (" << q.size() << " frames)\n";
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string out, data, resume, loss_csv, assign, modules;
  std::optional<int> epochs, stop_after;
};

int run_train(const TrainArgs& a) {
  Settings s = resolve(a.common);
  if (!a.assign.empty()) s.train.labels.mode = parse_assignment(a.assign);
  apply_modules(s.model, a.modules);
  if (a.epochs) s.train.epochs = *a.epochs;

  Model model;
  CheckpointExtras extras;
  if (!a.resume.empty()) {
    model = load_checkpoint(a.resume, &extras);
    s.model = model.cfg;
  }
  s.validate();
  if (a.resume.empty()) model = Model::init(s.model, s.train.seed);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Sequence> data;
  if (!a.data.empty()) {
    data = load_dataset(a.data);
  } else {
    data = generate_corpus(s.synth.train_spec(), s.synth.train_count, "train");
    std::cerr << "generated " << data.size() << " training sequences in " << seconds_since(t0) << " s\n";
  }

  Trainer trainer(model, s.train, data);
  if (!a.resume.empty()) trainer.resume(extras);
  const int last = a.stop_after ? std::min(*a.stop_after, s.train.epochs) : s.train.epochs;
  std::vector<LossRecord> history;
  for (int e = trainer.next_epoch(); e < last; ++e) {
    for (const auto& r : trainer.run_epoch(e)) history.push_back(r);
    save_checkpoint(a.out, model, trainer.extras());
    std::cerr << "epoch " << e + 1 << "/" << s.train.epochs << " done, " << seconds_since(t0) << " s, checkpoint "
              << a.out << "\n";
  }
  if (history.empty()) save_checkpoint(a.out, model, trainer.extras());
  const fs::path csv = a.loss_csv.empty() ? fs::path(a.out).replace_extension(".loss.csv") : fs::path(a.loss_csv);
  write_loss_csv(csv, history);
  if (!history.empty()) {
    std::cerr << "final batch loss " << history.back().total << ", skipped batches " << trainer.skipped_batches()
              << ", loss history " << csv.string() << "\n";
  }
  return 0;
}

// ---- track ----------------------------------------------------------------

struct TrackArgs {
  Common common;
  std::string model, data, out, modules;
  std::vector<std::string> seqs;
  bool no_update = false;
  int jobs = 1;
};

std::vector<Sequence> gather(const std::string& root, const std::vector<std::string>& dirs) {
  std::vector<Sequence> out;
  if (!root.empty())
    for (auto& q : load_dataset(root)) out.push_back(std::move(q));
  for (const auto& d : dirs) out.push_back(load_sequence_dir(d));
  if (out.empty()) throw ContractError("no sequences: pass --data ROOT or --seq DIR");
  return out;
}

Model load_for_tracking(const std::string& path, const std::string& modules) {
  Model m = load_checkpoint(path);
  apply_modules(m.cfg, modules);
  return m;
}

std::vector<Rect> boxes_of(const std::vector<FrameResult>& r) {
  std::vector<Rect> out;
  for (const auto& f : r) out.push_back(f.box);
  return out;
}

int run_track(const TrackArgs& a) {
  Settings s = resolve(a.common);
  if (a.no_update) s.tracker.disable_updates();
  s.validate();
  const Model model = load_for_tracking(a.model, a.modules);
  const auto data = gather(a.data, a.seqs);
  const Tracker tracker(model, s.tracker);
  std::function<int(std::size_t)> one = [&](std::size_t i) {
    const Sequence& q = data[i];
    const auto res = track_frames(tracker, q.frames, q.gt.front());
    write_results(fs::path(a.out) / (q.name + ".txt"), res);
    write_confidences(fs::path(a.out) / (q.name + "_confidence.txt"), res);
    int updates = 0;
    for (const auto& f : res) updates += f.updated;
    return updates;
  };
  const auto updates = parallel_map<int>(data.size(), a.jobs, one);
  for (std::size_t i = 0; i < data.size(); ++i)
    std::cerr << data[i].name << ": " << data[i].size() << " frames, " << updates[i] << " template updates\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string data, results, out, ablate, modules;
  bool plots = false;
  bool no_update = false;
  int jobs = 1;
};

NamedRunner results_runner(const std::string& name, const fs::path& dir) {
  return {name, [dir] {
            return SequenceRunner([dir](const Sequence& q) { return read_boxes(dir / (q.name + ".txt")); });
          }};
}

NamedRunner model_runner(const std::string& name, const fs::path& ckpt, const TrackerConfig& tc,
                         const std::string& modules) {
  return {name, [ckpt, tc, modules] {
            auto model = std::make_shared<Model>(load_for_tracking(ckpt, modules));
            auto tracker = std::make_shared<Tracker>(*model, tc);
            return SequenceRunner([model, tracker](const Sequence& q) {
              return boxes_of(track_frames(*tracker, q.frames, q.gt.front()));
            });
          }};
}

void write_plots(const fs::path& out, const std::string& config, const std::vector<RunResult>& runs) {
  std::vector<double> ious, errors;
  for (const auto& r : runs) {
    ious.insert(ious.end(), r.ious.begin(), r.ious.end());
    errors.insert(errors.end(), r.center_errors.begin(), r.center_errors.end());
  }
  std::vector<double> st, pt;
  for (int k = 0; k < kSuccessThresholds; ++k) st.push_back(k / 20.0);
  const auto pc = precision_curve(errors);
  for (std::size_t t = 0; t < pc.size(); ++t) pt.push_back(static_cast<double>(t));
  write_curve_csv(out / (config + "_success.csv"), st, success_curve(ious));
  write_curve_csv(out / (config + "_precision.csv"), pt, pc);
}

int run_eval(const EvalArgs& a) {
  Settings s = resolve(a.common);
  if (a.no_update) s.tracker.disable_updates();
  s.validate();
  const auto data = load_dataset(a.data);
  std::vector<NamedRunner> runners;
  if (!a.results.empty()) runners.push_back(results_runner("results", a.results));
  if (!a.ablate.empty()) {
    for (const auto& item : CLI::detail::split(a.ablate, ',')) {
      const auto eq = item.find('=');
      const std::string name = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
      const fs::path path = eq == std::string::npos ? item : item.substr(eq + 1);
      if (fs::is_directory(path)) runners.push_back(results_runner(name, path));
      else runners.push_back(model_runner(name, path, s.tracker, a.modules));
    }
  }
  if (runners.empty()) throw ContractError("eval needs --results DIR or --ablate NAME=PATH,...");

  Report rep;
  if (runners.size() == 1) {
    const SequenceRunner run = runners[0].make();
    std::function<RunResult(std::size_t)> one = [&](std::size_t i) {
      return RunResult::make(data[i].name, run(data[i]), data[i].gt, data[i].attributes);
    };
    const auto runs = parallel_map<RunResult>(data.size(), a.jobs, one);
    rep.configs.push_back(runners[0].name);
    rep.rows = report_rows(runners[0].name, runs);
    if (a.plots) write_plots(a.out, runners[0].name, runs);
  } else {
    rep = ablation_report(runners, data, a.jobs);
    if (a.plots) {
      for (const auto& r : runners) {
        const SequenceRunner run = r.make();
        std::vector<RunResult> runs;
        for (const auto& q : data) runs.push_back(RunResult::make(q.name, run(q), q.gt, q.attributes));
        write_plots(a.out, r.name, runs);
      }
    }
  }
  write_report_json(fs::path(a.out) / "report.json", rep);
  write_report_csv(fs::path(a.out) / "report.csv", rep);

  std::printf("%-12s %8s %9s %8s %8s %8s\n", "config", "AUC", "precision", "AO", "SR50", "SR75");
  for (const auto& name : rep.configs) {
    const ReportRow* row = rep.aggregate_row(name);
    if (!row) continue;
    if (row->failed) {
      std::printf("%-12s FAILED: %s\n", name.c_str(), row->error.c_str());
      continue;
    }
    std::printf("%-12s %8.4f %9.4f %8.4f %8.4f %8.4f\n", name.c_str(), row->m.auc, row->m.precision, row->m.ao,
                row->m.sr50, row->m.sr75);
  }
  return 0;
}

int run_settings(const Common& c) {
  Settings s = resolve(c);
  s.validate();
  std::cout << dump_settings(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese tracker with template fusion and search augmentation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write synthetic OTB-layout sequences");
  add_common(synth, sa.common);
  synth->add_option("--out", sa.out, "output root")->required();
  synth->add_option("--count", sa.count, "number of sequences");
  synth->add_option("--len", sa.length, "frames per sequence");
  synth->add_option("--attr", sa.attrs, "comma separated attributes: " + CLI::detail::join(attribute_names()));
  synth->add_flag("--zero-motion", sa.zero_motion, "static target and camera");
  synth->add_option("--prefix", sa.prefix, "sequence name prefix");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model, checkpointing every epoch");
  add_common(train, ta.common);
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--data", ta.data, "dataset root; default: generated corpus");
  train->add_option("--resume", ta.resume, "continue from a checkpoint");
  train->add_option("--loss-csv", ta.loss_csv, "loss history path; default: <out>.loss.csv");
  train->add_option("--assign", ta.assign, "cls1 label rule: iou or center_distance");
  train->add_option("--modules", ta.modules, "none, all, st or da");
  train->add_option("--epochs", ta.epochs, "number of epochs");
  train->add_option("--stop-after", ta.stop_after, "stop once this many epochs are done; continue with --resume")
      ->check(CLI::PositiveNumber);

  TrackArgs tk;
  auto* track = app.add_subcommand("track", "track sequences with a checkpoint");
  add_common(track, tk.common);
  track->add_option("--model", tk.model, "checkpoint")->required();
  track->add_option("--data", tk.data, "dataset root");
  track->add_option("--seq", tk.seqs, "single sequence directory; repeatable");
  track->add_option("--out", tk.out, "results directory")->required();
  track->add_flag("--no-update", tk.no_update, "never refresh the templates");
  track->add_option("--modules", tk.modules, "none, all, st or da");
  track->add_option("--jobs", tk.jobs, "parallel sequences")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score results or compare checkpoints");
  add_common(eval, ev.common);
  eval->add_option("--data", ev.data, "dataset root with ground truth")->required();
  eval->add_option("--results", ev.results, "results directory with <seq>.txt files");
  eval->add_option("--ablate", ev.ablate, "NAME=PATH,... where PATH is a checkpoint or results directory");
  eval->add_option("--out", ev.out, "report directory")->required();
  eval->add_flag("--plots", ev.plots, "write success and precision curve CSVs");
  eval->add_flag("--no-update", ev.no_update, "never refresh the templates");
  eval->add_option("--modules", ev.modules, "none, all, st or da");
  eval->add_option("--jobs", ev.jobs, "parallel sequences")->check(CLI::PositiveNumber);

  Common sc;
  auto* settings = app.add_subcommand("settings", "print every setting with its effective value");
  add_common(settings, sc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*track) return run_track(tk);
    if (*eval) return run_eval(ev);
    if (*settings) return run_settings(sc);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

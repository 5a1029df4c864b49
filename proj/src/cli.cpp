#include "dvsdrive/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "dvsdrive/dataset.hpp"
#include "dvsdrive/frames.hpp"
#include "dvsdrive/metrics.hpp"
#include "dvsdrive/recording.hpp"
#include "dvsdrive/scene.hpp"
#include "dvsdrive/sync.hpp"

namespace fs = std::filesystem;

namespace dvsdrive {

namespace {

struct SyncOptions {
  std::uint64_t window_ms = 50;
  std::string label_mode = "zoh";
  std::uint64_t max_label_gap_ms = 200;

  SyncPolicy policy() const {
    SyncPolicy p;
    p.window_ms = window_ms;
    p.max_label_gap_ms = max_label_gap_ms;
    p.label_mode = label_mode == "linear" ? LabelMode::Linear : LabelMode::ZeroOrderHold;
    p.validate();
    return p;
  }
};

void add_sync_options(CLI::App* cmd, SyncOptions& o) {
  cmd->add_option("--window-ms", o.window_ms, "Accumulation window length")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--label-mode", o.label_mode, "Steering/speed label at window end")
      ->capture_default_str()
      ->check(CLI::IsMember({"zoh", "linear"}));
  cmd->add_option("--max-label-gap-ms", o.max_label_gap_ms, "Oldest label sample accepted")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void print_counters(std::ostream& out, const std::string& prefix, const SyncCounters& c) {
  out << prefix << "windows=" << c.windows << '\n'
      << prefix << "emitted=" << c.emitted << '\n'
      << prefix << "skipped_no_aps=" << c.skipped_no_aps << '\n'
      << prefix << "skipped_events=" << c.skipped_events << '\n'
      << prefix << "flagged_label_gap=" << c.flagged_label_gap << '\n';
}

// ============================================================================
// simulate
// ============================================================================

struct SimulateOptions {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta;
  double duration_s = 60.0;
  double lighting = 1.0;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  ScenarioParams scenario;
  if (!o.scenario.empty()) {
    scenario = ScenarioParams::from_config(KeyValues::load(o.scenario));
    if (o.seed) scenario.seed = *o.seed;
  } else {
    scenario = ScenarioParams::random(o.seed.value_or(1), o.duration_s, o.lighting);
  }
  if (o.theta) scenario.sensor.threshold = *o.theta;
  scenario.validate();

  SceneGenerator gen(scenario);
  std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
  if (!file) throw RecordingError("cannot open " + o.out + " for writing");
  RecordingWriter writer(file, gen.meta());
  while (!gen.done()) {
    for (const auto& p : gen.next_chunk()) writer.write(p);
  }
  file.flush();
  if (!file) throw RecordingError("write failed: " + o.out);

  out << "id=" << scenario.id << '\n'
      << "scenario=" << scenario.tag << '\n'
      << "duration_s=" << fmt(scenario.duration_s) << '\n'
      << "dvs_events=" << gen.events_emitted() << '\n'
      << "packets=" << writer.packets_written() << '\n'
      << "bytes=" << writer.bytes_written() << '\n';
  return kExitOk;
}

// ============================================================================
// info
// ============================================================================

int cmd_info(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RecordingError("cannot open " + path);
  RecordingReader reader(in, [&err](const std::string& w) { err << "warning: " << w << '\n'; });
  const auto stats = stream_stats(reader);
  out << format_stats(reader.meta(), stats);
  return kExitOk;
}

// ============================================================================
// prep
// ============================================================================

struct PrepOptions {
  std::vector<std::string> inputs;
  std::string out;
  std::uint64_t seed = 1;
  SyncOptions sync;
};

struct RecordingLabels {
  std::string id;
  std::string tag;
  std::vector<SampleLabel> labels;  // label-valid windows, time-ordered
  SyncCounters counters;
};

RecordingLabels label_pass(const std::string& path, const SyncPolicy& policy) {
  StreamMerger merged(file_source(path));
  RecordingLabels r;
  r.id = merged.meta().id.empty() ? fs::path(path).stem().string() : merged.meta().id;
  r.tag = merged.meta().scenario;
  Windower windower(policy);
  auto drain = [&] {
    while (auto rec = windower.pop()) {
      if (rec->label_valid) r.labels.push_back(label_of(*rec, r.id));
    }
  };
  while (auto p = merged.next()) {
    windower.push(std::move(*p));
    drain();
  }
  windower.finish();
  drain();
  r.counters = windower.counters();
  return r;
}

int cmd_prep(const PrepOptions& o, std::ostream& out, std::ostream& err) {
  const SyncPolicy policy = o.sync.policy();

  // Pass 1: labels only, one recording per worker.
  std::vector<std::future<RecordingLabels>> jobs;
  for (const auto& path : o.inputs) {
    jobs.push_back(std::async(std::launch::async, label_pass, path, policy));
  }
  std::vector<RecordingLabels> recs;
  for (auto& j : jobs) recs.push_back(j.get());

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!by_id.emplace(recs[i].id, i).second) {
      throw DatasetError("duplicate recording id '" + recs[i].id + "' (" + o.inputs[i] + ")");
    }
  }

  std::vector<std::vector<SampleLabel>> per_recording;
  for (const auto& r : recs) per_recording.push_back(r.labels);
  auto split = temporal_split<SampleLabel>(per_recording);
  for (const auto r : split.skipped_recordings) {
    err << "warning: " << o.inputs[r] << ": no labelled windows, recording skipped\n";
  }

  PrepStats train_stats, test_stats;
  train_stats.steering_sigma = steering_sigma<SampleLabel>(split.train);
  test_stats.steering_sigma = train_stats.steering_sigma;
  auto train = filter_samples(std::move(split.train), train_stats, true);
  train = rebalance_straight(std::move(train), o.seed, &train_stats);
  auto test = filter_samples(std::move(split.test), test_stats, false);
  if (train.empty()) throw DatasetError("no training samples left after filtering");
  if (test.empty()) throw DatasetError("no test samples left after filtering");

  // Pass 2: images for the retained windows, streamed straight to disk.
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw DatasetError("cannot create " + o.out + ": " + ec.message());
  const std::string train_path = (fs::path(o.out) / "train.ddsm").string();
  const std::string test_path = (fs::path(o.out) / "test.ddsm").string();

  std::vector<std::map<std::uint64_t, bool>> keep(recs.size());  // window index -> is_train
  for (const auto& s : train) keep[by_id.at(s.recording_id)][s.window_index] = true;
  for (const auto& s : test) keep[by_id.at(s.recording_id)][s.window_index] = false;

  DatasetWriter train_writer(train_path);
  DatasetWriter test_writer(test_path);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (keep[i].empty()) continue;
    StreamMerger merged(file_source(o.inputs[i]));
    const auto& meta = merged.meta();
    Windower windower(policy);
    auto drain = [&] {
      while (auto rec = windower.pop()) {
        const auto it = keep[i].find(rec->index);
        if (it == keep[i].end()) continue;
        const auto sample = make_sample(*rec, recs[i].id, meta.width, meta.height);
        (it->second ? train_writer : test_writer).write(sample);
      }
    };
    while (auto p = merged.next()) {
      windower.push(std::move(*p));
      drain();
    }
    windower.finish();
    drain();
  }
  const auto train_count = train_writer.close();
  const auto test_count = test_writer.close();
  if (train_count != train.size() || test_count != test.size()) {
    throw DatasetError("second pass disagrees with first pass on window contents");
  }

  KeyValues common;
  common.set("seed", std::to_string(o.seed));
  common.set("window_ms", std::to_string(policy.window_ms));
  common.set("label_mode", o.sync.label_mode);
  common.set("max_label_gap_ms", std::to_string(policy.max_label_gap_ms));
  common.set("recordings", std::to_string(recs.size()));
  common.set("rebalance", "bernoulli drop p=0.7 for |steering|<=5 deg, train only");
  common.set("split_rule", "first floor(0.7n) windows of each recording train, rest test");
  train_stats.write_to(common, "train");
  test_stats.write_to(common, "test");

  KeyValues train_manifest = common;
  train_manifest.set("split", "train");
  write_manifest(train_path, dataset_manifest(train_count, train_manifest));
  KeyValues test_manifest = common;
  test_manifest.set("split", "test");
  write_manifest(test_path, dataset_manifest(test_count, test_manifest));

  // Ground truth for the evaluator, in prediction CSV form.
  const std::string gt_path = (fs::path(o.out) / "test_labels.csv").string();
  std::ofstream gt(gt_path);
  std::vector<TimedValue> rows;
  rows.reserve(test.size());
  for (const auto& s : test) rows.push_back({s.window_end_ms, s.steering_deg});
  write_prediction_csv(gt, rows);
  if (!gt) throw DatasetError(gt_path + ": write failed");

  SyncCounters total;
  for (const auto& r : recs) {
    total.windows += r.counters.windows;
    total.emitted += r.counters.emitted;
    total.skipped_no_aps += r.counters.skipped_no_aps;
    total.skipped_events += r.counters.skipped_events;
    total.flagged_label_gap += r.counters.flagged_label_gap;
  }
  out << "recordings=" << recs.size() << '\n';
  print_counters(out, "sync.", total);
  out << common.to_string();
  const auto input = train_stats.input + test_stats.input;
  out << "retained_fraction="
      << fmt(input ? static_cast<double>(train_count + test_count) / static_cast<double>(input) : 0.0, 4)
      << '\n';
  out << "train.count=" << train_count << '\n'
      << "test.count=" << test_count << '\n'
      << "train.path=" << train_path << '\n'
      << "test.path=" << test_path << '\n'
      << "test.labels=" << gt_path << '\n';
  return kExitOk;
}

// ============================================================================
// export-frames
// ============================================================================

struct ExportOptions {
  std::string input;
  std::string out;
  std::uint64_t limit = 0;  // 0 = all
  bool full_resolution = false;
  SyncOptions sync;
};

int cmd_export_frames(const ExportOptions& o, std::ostream& out) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw FrameError("cannot create " + o.out + ": " + ec.message());

  StreamMerger merged(file_source(o.input));
  const auto meta = merged.meta();
  Windower windower(o.sync.policy());
  std::ofstream labels(fs::path(o.out) / "labels.csv");
  labels << "ts_ms,deg\n";
  std::uint64_t written = 0;
  auto drain = [&] {
    while (auto rec = windower.pop()) {
      if (o.limit && written >= o.limit) continue;
      auto dvs = normalize_dvs(accumulate_dvs(rec->events, meta.width, meta.height));
      auto aps = normalize_aps(*rec->frame);
      if (!o.full_resolution) {
        dvs = downsample(dvs);
        aps = downsample(aps);
      }
      char name[32];
      std::snprintf(name, sizeof name, "%06llu", static_cast<unsigned long long>(rec->index));
      write_pgm(dvs, (fs::path(o.out) / ("dvs_" + std::string(name) + ".pgm")).string());
      write_pgm(aps, (fs::path(o.out) / ("aps_" + std::string(name) + ".pgm")).string());
      labels << rec->end_ms << ',' << fmt(rec->steering_deg, 17) << '\n';
      ++written;
    }
  };
  while (auto p = merged.next()) {
    windower.push(std::move(*p));
    drain();
  }
  windower.finish();
  drain();
  if (!labels) throw FrameError("cannot write labels.csv in " + o.out);
  out << "frames=" << written << '\n';
  print_counters(out, "sync.", windower.counters());
  return kExitOk;
}

// ============================================================================
// eval
// ============================================================================

struct EvalOptions {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::vector<std::string> tag;
  std::vector<std::string> mode;
  std::string runs;
};

struct EvalJob {
  std::string tag, mode, pred, gt;
};

std::vector<EvalJob> eval_jobs(const EvalOptions& o) {
  std::vector<EvalJob> jobs;
  if (!o.runs.empty()) {
    std::ifstream in(o.runs);
    if (!in) throw MetricsError("cannot open " + o.runs);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#' || (lineno == 1 && line.rfind("tag,", 0) == 0)) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() != 4) {
        throw MetricsError(o.runs + ":" + std::to_string(lineno) + ": expected tag,mode,pred,gt");
      }
      const fs::path base = fs::path(o.runs).parent_path();
      jobs.push_back({f[0], f[1], (base / f[2]).string(), (base / f[3]).string()});
    }
  }
  const std::size_t n = o.pred.size();
  if (o.gt.size() != n && o.gt.size() != 1) {
    throw CLI::ValidationError("--gt", "give one --gt, or one per --pred");
  }
  auto pick = [n](const std::vector<std::string>& v, std::size_t i, const std::string& dflt,
                  const char* flag) {
    if (v.empty()) return dflt;
    if (v.size() == 1) return v[0];
    if (v.size() != n) throw CLI::ValidationError(flag, "give one value, or one per --pred");
    return v[i];
  };
  for (std::size_t i = 0; i < n; ++i) {
    jobs.push_back({pick(o.tag, i, "all", "--tag"), pick(o.mode, i, "DVS+APS", "--mode"), o.pred[i],
                    o.gt.size() == 1 ? o.gt[0] : o.gt[i]});
  }
  if (jobs.empty()) throw CLI::ValidationError("eval", "need --pred/--gt or --runs");
  return jobs;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  std::vector<RunResult> results;
  for (const auto& job : eval_jobs(o)) {
    const auto pred = read_prediction_csv(job.pred);
    const auto gt = read_prediction_csv(job.gt);
    const auto set = pair_by_timestamp(pred, gt);
    RunResult r{job.tag, job.mode, rmse(set), eva(set)};
    out << "run " << results.size() + 1 << ": tag=" << r.tag << " mode=" << r.mode
        << " n=" << set.size() << " rmse=" << fmt(r.rmse, 6) << " eva=" << fmt(r.eva, 6) << '\n';
    results.push_back(r);
  }
  out << '\n' << format_results(results);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event+frame driving data pipeline"};
  app.name("dvsdrive");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Render a driving scenario into a recording");
  simulate->add_option("--scenario", sim.scenario, "Scenario key=value file")
      ->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output container")->required();
  simulate->add_option("--seed", sim.seed, "Scenario seed (overrides the file)");
  simulate->add_option("--theta", sim.theta, "DVS contrast threshold (log units, default 0.2)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--duration", sim.duration_s, "Random scenario length in seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  simulate->add_option("--lighting", sim.lighting, "Random scenario lighting, 0 night .. 1 day")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));

  std::string info_path;
  auto* info = app.add_subcommand("info", "Print per-stream statistics of a recording");
  info->add_option("recording", info_path, "Container file")->required()->check(CLI::ExistingFile);

  PrepOptions prep;
  auto* prep_cmd = app.add_subcommand("prep", "Build train/test sample files from recordings");
  prep_cmd->add_option("recordings", prep.inputs, "Container files")
      ->required()
      ->check(CLI::ExistingFile);
  prep_cmd->add_option("--out", prep.out, "Output directory")->required();
  prep_cmd->add_option("--seed", prep.seed, "Rebalancing seed")->capture_default_str();
  add_sync_options(prep_cmd, prep.sync);

  ExportOptions exp;
  auto* export_cmd = app.add_subcommand("export-frames", "Write DVS/APS frames as PGM images");
  export_cmd->add_option("recording", exp.input, "Container file")
      ->required()
      ->check(CLI::ExistingFile);
  export_cmd->add_option("--out", exp.out, "Output directory")->required();
  export_cmd->add_option("--limit", exp.limit, "Stop after this many windows (0 = all)");
  export_cmd->add_flag("--full-resolution", exp.full_resolution, "Skip the 172x128 downsample");
  add_sync_options(export_cmd, exp.sync);

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "RMSE/EVA table from prediction CSVs");
  eval->add_option("--pred", ev.pred, "Prediction CSV (repeatable)")->check(CLI::ExistingFile);
  eval->add_option("--gt", ev.gt, "Ground truth CSV (one, or one per --pred)")
      ->check(CLI::ExistingFile);
  eval->add_option("--tag", ev.tag, "Dataset tag per run (default all)");
  eval->add_option("--mode", ev.mode, "Input mode per run: DVS+APS, DVS or APS");
  eval->add_option("--runs", ev.runs, "CSV of tag,mode,pred,gt rows")->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      return app.exit(e, out, err);  // --help
    }
    if (args.empty()) {
      err << app.help();
    } else {
      app.exit(e, out, err);
    }
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*info) return cmd_info(info_path, out, err);
    if (*prep_cmd) return cmd_prep(prep, out, err);
    if (*export_cmd) return cmd_export_frames(exp, out);
    if (*eval) return cmd_eval(ev, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitProcessing;
  }
  return kExitUsage;
}

}  // namespace dvsdrive

#include "pipelines.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <climits>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "datastore.hpp"
#include "errors.hpp"
#include "fileio.hpp"
#include "gating.hpp"
#include "rng.hpp"
#include "trajectory_engine.hpp"
#include "trajectory_metrics.hpp"

namespace thinkstop::pipelines {

namespace fs = std::filesystem;

namespace {

void emit(const Logger& log, const std::string& line) {
  if (log) log(line);
}

fs::path trajectory_file(const fs::path& p) { return fs::is_directory(p) ? p / kTrajectoriesFile : p; }

std::vector<TrajectoryRecord> load_records(const fs::path& traces, bool include_truncated) {
  auto recs = read_trajectories(trajectory_file(traces));
  if (!include_truncated) {
    std::erase_if(recs, [](const TrajectoryRecord& r) { return r.has_flag(kFlagTruncated); });
  }
  return recs;
}

std::string failure_class(const std::exception& e) {
  if (dynamic_cast<const EndpointError*>(&e)) return "endpoint";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  return "error";
}

TrajectoryRecord to_record(const TraceRecord& trace, AnswerTrajectory traj) {
  TrajectoryRecord rec;
  rec.trajectory = std::move(traj);
  rec.task = trace.task;
  rec.final_answer = trace.final_answer;
  rec.gold = trace.gold;
  rec.flags = trace.flags;
  return rec;
}

std::vector<DatasetRow> sample_rows(std::vector<DatasetRow> rows, std::int64_t sample, std::uint64_t seed) {
  if (sample < 0) return rows;
  std::map<TaskKind, std::vector<std::string>> by_task;
  for (const auto& r : rows) by_task[r.task].push_back(r.id);
  std::set<std::string> keep;
  for (auto& [task, ids] : by_task) {
    const std::size_t want = sample > 0 ? static_cast<std::size_t>(sample) : default_sample_size(task);
    std::sort(ids.begin(), ids.end());
    rng::Engine eng(rng::derive(seed, "dataset-sample/" + std::string(to_string(task))));
    rng::shuffle(ids.begin(), ids.end(), eng);
    ids.resize(std::min(want, ids.size()));
    keep.insert(ids.begin(), ids.end());
  }
  std::erase_if(rows, [&](const DatasetRow& r) { return !keep.count(r.id); });
  return rows;
}

std::map<std::string, std::pair<TraceRecord, TrajectoryRecord>> load_existing(const fs::path& out_dir) {
  std::map<std::string, std::pair<TraceRecord, TrajectoryRecord>> done;
  const auto traces_path = out_dir / kTracesFile;
  const auto trajs_path = out_dir / kTrajectoriesFile;
  if (!fs::exists(traces_path) || !fs::exists(trajs_path)) return done;
  std::map<std::string, TrajectoryRecord> trajs;
  for (auto& r : read_trajectories(trajs_path)) trajs.emplace(r.trajectory.trace_id, std::move(r));
  for (auto& t : read_traces(traces_path)) {
    auto it = trajs.find(t.id);
    if (it == trajs.end()) continue;
    auto id = t.id;
    done.emplace(std::move(id), std::make_pair(std::move(t), std::move(it->second)));
  }
  return done;
}

}  // namespace

CollectReport collect_with_backend(const CollectOptions& opts, InferenceBackend& backend,
                                   const EngineConfig& engine, int max_inflight, const Logger& log) {
  if (opts.out_dir.empty()) throw ConfigError("collect needs an output directory");
  auto rows = sample_rows(read_dataset(opts.dataset), opts.sample, opts.seed);
  auto done = load_existing(opts.out_dir);

  CollectReport report;
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (done.count(rows[i].id)) {
      ++report.skipped;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex mu;
  std::vector<ordered_json> failures;
  std::atomic<std::size_t> next{0};
  std::size_t since_checkpoint = 0;

  auto write_outputs = [&] {
    // Dataset order first, then anything kept from an earlier run.
    std::vector<TraceRecord> traces;
    std::vector<TrajectoryRecord> trajs;
    std::set<std::string> written;
    for (const auto& r : rows) {
      auto it = done.find(r.id);
      if (it == done.end()) continue;
      traces.push_back(it->second.first);
      trajs.push_back(it->second.second);
      written.insert(r.id);
    }
    for (const auto& [id, pair] : done) {
      if (written.count(id)) continue;
      traces.push_back(pair.first);
      trajs.push_back(pair.second);
    }
    write_traces(opts.out_dir / kTracesFile, traces);
    write_trajectories(opts.out_dir / kTrajectoriesFile, trajs);
  };

  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const DatasetRow& row = rows[pending[k]];
      try {
        TraceRecord trace = collect_trace(backend, row, engine);
        AnswerTrajectory traj = build_trajectory(backend, trace, engine);
        TrajectoryRecord rec = to_record(trace, std::move(traj));
        std::lock_guard lock(mu);
        done.emplace(row.id, std::make_pair(std::move(trace), std::move(rec)));
        ++report.collected;
        emit(log, "collected " + row.id);
        if (++since_checkpoint >= 16) {
          since_checkpoint = 0;
          write_outputs();
        }
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        ++report.failed;
        failures.push_back({{"id", row.id}, {"class", failure_class(e)}, {"message", e.what()}});
        emit(log, "failed " + row.id + ": " + e.what());
      }
    }
  };

  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, max_inflight)), pending.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  fs::create_directories(opts.out_dir);
  write_outputs();
  std::sort(failures.begin(), failures.end(),
            [](const ordered_json& a, const ordered_json& b) { return a["id"] < b["id"]; });
  std::string failure_lines;
  for (const auto& f : failures) failure_lines += f.dump() + "\n";
  write_file_atomic(opts.out_dir / kFailuresFile, failure_lines);
  const bool all_endpoint = std::all_of(failures.begin(), failures.end(),
                                        [](const ordered_json& f) { return f["class"] == "endpoint"; });
  if (report.collected == 0 && !failures.empty() && all_endpoint) {
    throw EndpointError("all " + std::to_string(failures.size()) + " examples failed at the endpoint; first: " +
                            failures.front()["message"].get<std::string>(),
                        false, 0);
  }
  return report;
}

CollectReport collect(const CollectOptions& opts, const Logger& log) {
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(read_file(opts.endpoint_config));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(opts.endpoint_config.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  EndpointConfig endpoint = endpoint_config_from_json(cfg_json);
  if (opts.max_inflight > 0) endpoint.max_inflight = opts.max_inflight;

  EngineConfig engine;
  engine.seed = opts.seed;
  engine.keep_truncated = opts.keep_truncated;
  if (cfg_json.contains("generation")) {
    const auto& g = cfg_json["generation"];
    try {
      engine.reasoning.temperature = g.value("temperature", engine.reasoning.temperature);
      engine.reasoning.max_tokens = g.value("max_tokens", engine.reasoning.max_tokens);
      engine.reasoning.top_logprobs = g.value("top_logprobs", engine.reasoning.top_logprobs);
      engine.answer.max_tokens = g.value("answer_max_tokens", engine.answer.max_tokens);
      engine.step_concurrency = g.value("step_concurrency", engine.step_concurrency);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("generation config: ") + e.what());
    }
  }
  engine.answer.temperature = engine.reasoning.temperature;
  engine.answer.top_logprobs = engine.reasoning.top_logprobs;
  engine.reasoning.validate();
  engine.answer.validate();

  InferenceClient client(endpoint);
  return collect_with_backend(opts, client, engine, endpoint.max_inflight, log);
}

void metrics(const MetricsOptions& opts, const Logger& log) {
  EquivalenceConfig eq{opts.gamma};
  eq.validate();
  SmoothingConfig smoothing{opts.k};
  smoothing.validate();
  const int flip_k = opts.flip_k > 0 ? opts.flip_k : opts.k;

  const auto recs = load_records(opts.traces, opts.include_truncated);
  if (recs.empty()) throw DataError("no trajectories to summarize in " + opts.traces.string());

  std::vector<MetricsRow> rows;
  rows.reserve(recs.size());
  for (const auto& r : recs) rows.push_back(compute_metrics(r.trajectory, eq, smoothing, flip_k));
  const MetricsSummary summary = summarize(rows);

  struct Series {
    const char* name;
    std::vector<double> values;
  };
  std::vector<Series> series{{"switches_raw", {}}, {"switches_denoised", {}}, {"tafs", {}},
                             {"t_after_raw", {}},  {"t_after_denoised", {}}};
  for (const auto& r : rows) {
    series[0].values.push_back(static_cast<double>(r.switches_raw));
    series[1].values.push_back(static_cast<double>(r.switches_denoised));
    series[2].values.push_back(static_cast<double>(r.tafs));
    series[3].values.push_back(static_cast<double>(r.t_after_raw));
    series[4].values.push_back(static_cast<double>(r.t_after_denoised));
  }
  std::string ci = "metric\tmean\tlow\thigh\n";
  for (const auto& s : series) {
    const Interval iv =
        bootstrap_mean_ci(s.values, opts.bootstrap_resamples, opts.confidence, rng::derive(opts.seed, s.name));
    ci += std::string(s.name) + '\t' + format_fixed(iv.mean, 4) + '\t' + format_fixed(iv.low, 4) + '\t' +
          format_fixed(iv.high, 4) + '\n';
  }

  write_file_atomic(opts.out_dir / "metrics_rows.tsv", metrics_rows_table(rows));
  write_file_atomic(opts.out_dir / "summary.tsv", summary_table(summary));
  write_file_atomic(opts.out_dir / "bootstrap.tsv", ci);
  emit(log, "summarized " + std::to_string(rows.size()) + " trajectories: no-switch " +
                format_fixed(summary.no_switch_raw_pct, 1) + "% raw / " +
                format_fixed(summary.no_switch_denoised_pct, 1) + "% denoised, switches " +
                format_fixed(summary.switches_raw, 2) + " / " + format_fixed(summary.switches_denoised, 2));
}

ProbeRunConfig load_probe_run_config(const fs::path& path) {
  ProbeRunConfig c;
  if (path.empty()) return c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
    auto& t = c.train;
    t.steps_per_trace = j.value("steps_per_trace", t.steps_per_trace);
    t.lr_grid = j.value("lr_grid", t.lr_grid);
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.seed = j.value("seed", t.seed);
    t.exclude_step0 = j.value("exclude_step0", t.exclude_step0);
    if (j.contains("reference_layer")) t.reference_layer = j["reference_layer"].get<std::uint32_t>();
    const auto source = j.value("label_source", std::string("raw"));
    if (source == "raw") {
      t.label_source = LabelSource::Raw;
    } else if (source == "denoised") {
      t.label_source = LabelSource::Denoised;
    } else {
      throw ConfigError("label_source must be 'raw' or 'denoised'");
    }
    c.smoothing_k = j.value("smoothing_k", c.smoothing_k);
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("split")) {
      const auto r = j["split"].get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("split must list three ratios");
      std::copy(r.begin(), r.end(), c.split_ratios);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  c.train.validate();
  return c;
}

namespace {

class DumpCache {
 public:
  explicit DumpCache(fs::path dir) : dir_(std::move(dir)) {}

  std::shared_ptr<const HiddenStateDump> get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    const fs::path p = dir_ / dump_file_name(id);
    std::shared_ptr<const HiddenStateDump> dump;
    if (fs::exists(p)) {
      auto d = read_dump(p);
      d.trace_id = id;
      dump = std::make_shared<const HiddenStateDump>(std::move(d));
    }
    cache_.emplace(id, dump);
    return dump;
  }

 private:
  fs::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const HiddenStateDump>> cache_;
};

std::vector<fs::path> dumps_per_input(const std::vector<fs::path>& dumps, std::size_t inputs) {
  if (dumps.size() == 1) return std::vector<fs::path>(inputs, dumps.front());
  if (dumps.size() != inputs) throw ConfigError("give one dumps directory, or one per traces input");
  return dumps;
}

std::vector<TraceLabelInfo> label_infos(const std::vector<TrajectoryRecord>& recs, const std::set<std::string>& ids,
                                        const ProbeRunConfig& cfg) {
  const EquivalenceConfig eq{cfg.gamma};
  std::vector<TraceLabelInfo> out;
  for (const auto& r : recs) {
    if (!ids.count(r.trajectory.trace_id)) continue;
    const auto& traj = r.trajectory;
    const std::int64_t t_star = cfg.train.label_source == LabelSource::Raw
                                    ? final_switch_index(traj, eq)
                                    : final_switch_index(hold_for_k(traj, eq, cfg.smoothing_k), eq);
    out.push_back({traj.trace_id, traj.steps(), t_star});
  }
  return out;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string label_source_name(LabelSource s) { return s == LabelSource::Raw ? "raw" : "denoised"; }

}  // namespace

void probe_train(const ProbeTrainOptions& opts, const Logger& log) {
  if (opts.traces.empty()) throw ConfigError("probe-train needs at least one --traces input");
  if (opts.traces.size() > 1 && !opts.union_of_tasks) {
    throw ConfigError("several --traces inputs train a generic probe; pass --union");
  }
  if (opts.dumps.empty()) throw ConfigError("probe-train needs --dumps");
  const ProbeRunConfig cfg = load_probe_run_config(opts.config);
  const auto dump_dirs = dumps_per_input(opts.dumps, opts.traces.size());

  std::vector<TraceLabelInfo> train_infos, val_infos;
  std::vector<std::unique_ptr<DumpCache>> caches;
  std::map<std::string, DumpCache*> owner;
  for (std::size_t i = 0; i < opts.traces.size(); ++i) {
    const auto recs = load_records(opts.traces[i], false);
    std::vector<std::string> ids;
    for (const auto& r : recs) ids.push_back(r.trajectory.trace_id);
    const Split split = split_ids(ids, cfg.split_ratios[0], cfg.split_ratios[1], cfg.split_ratios[2],
                                  rng::derive(opts.split_seed, "split/" + std::to_string(i)));
    write_file_atomic(opts.out_dir / ("split_" + std::to_string(i) + ".json"), split_to_json(split).dump(1) + "\n");

    caches.push_back(std::make_unique<DumpCache>(dump_dirs[i]));
    for (const auto& id : ids) {
      if (!owner.emplace(id, caches.back().get()).second) {
        throw DataError("trace id '" + id + "' appears in more than one input");
      }
    }
    auto tr = label_infos(recs, as_set(split.train), cfg);
    auto va = label_infos(recs, as_set(split.validation), cfg);
    train_infos.insert(train_infos.end(), tr.begin(), tr.end());
    val_infos.insert(val_infos.end(), va.begin(), va.end());
    emit(log, opts.traces[i].string() + ": " + std::to_string(split.train.size()) + " train / " +
                  std::to_string(split.validation.size()) + " validation / " + std::to_string(split.test.size()) +
                  " test traces");
  }

  const DumpProvider provider = [&](const std::string& id) { return owner.at(id)->get(id); };
  const ProbeDataset train_set = build_training_set(train_infos, provider, cfg.train, true);
  const ProbeDataset val_set = build_training_set(val_infos, provider, cfg.train, false);
  emit(log, "training on " + std::to_string(train_set.items.size()) + " balanced steps (" +
                std::to_string(train_set.positives()) + " positive), validating on " +
                std::to_string(val_set.items.size()));

  const TrainResult result = train(train_set, val_set, cfg.train);
  write_probe(opts.out_dir / "probe.prb", result.probe);

  auto cells = [](const std::vector<GridCell>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& c : v) {
      a.push_back({{"learning_rate", c.learning_rate},
                   {"layer", c.layer},
                   {"diverged", c.diverged},
                   {"validation_ap", c.validation_ap}});
    }
    return a;
  };
  ordered_json report;
  report["layer"] = result.probe.layer;
  report["dim"] = result.probe.dim();
  report["learning_rate"] = result.probe.meta.learning_rate;
  report["epochs"] = result.probe.meta.epochs;
  report["seed"] = result.probe.meta.seed;
  report["validation_ap"] = result.probe.meta.validation_ap;
  report["reference_layer"] = cfg.train.reference_layer.value_or(train_set.layers / 2);
  report["label_source"] = label_source_name(cfg.train.label_source);
  report["smoothing_k"] = cfg.smoothing_k;
  report["gamma"] = cfg.gamma;
  report["split_seed"] = opts.split_seed;
  report["generic"] = opts.union_of_tasks;
  report["lr_stage"] = cells(result.lr_stage);
  report["layer_stage"] = cells(result.layer_stage);
  write_file_atomic(opts.out_dir / "probe.json", report.dump(2) + "\n");
  emit(log, "selected layer " + std::to_string(result.probe.layer) + " at lr " +
                format_fixed(result.probe.meta.learning_rate, 4) + ", validation AP " +
                format_fixed(result.probe.meta.validation_ap, 4));
}

void probe_eval(const ProbeEvalOptions& opts, const Logger& log) {
  const ProbeModel probe = read_probe(opts.probe);
  if (opts.traces.empty()) throw ConfigError("probe-eval needs at least one --traces input");
  if (opts.dumps.empty()) throw ConfigError("probe-eval needs --dumps");
  const auto dump_dirs = dumps_per_input(opts.dumps, opts.traces.size());

  ProbeRunConfig cfg;
  nlohmann::json sidecar;
  auto sidecar_path = opts.probe;
  sidecar_path.replace_extension(".json");
  if (fs::exists(sidecar_path)) {
    try {
      sidecar = nlohmann::json::parse(read_file(sidecar_path));
      cfg.train.label_source =
          sidecar.value("label_source", std::string("raw")) == "denoised" ? LabelSource::Denoised : LabelSource::Raw;
      cfg.smoothing_k = sidecar.value("smoothing_k", cfg.smoothing_k);
      cfg.gamma = sidecar.value("gamma", cfg.gamma);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(sidecar_path.string() + ": " + e.what());
    }
  }
  // Every step of every trace is scored, not a sample.
  cfg.train.steps_per_trace = INT_MAX;

  std::string out = "input\tsplit\tsteps\tpositives\tap\n";
  for (std::size_t i = 0; i < opts.traces.size(); ++i) {
    const auto recs = load_records(opts.traces[i], false);
    std::vector<std::pair<std::string, std::set<std::string>>> subsets;
    const fs::path split_path = opts.probe.parent_path() / ("split_" + std::to_string(i) + ".json");
    if (fs::exists(split_path)) {
      const Split split = split_from_json(ordered_json::parse(read_file(split_path)));
      subsets.emplace_back("validation", as_set(split.validation));
      subsets.emplace_back("test", as_set(split.test));
    } else {
      std::set<std::string> all;
      for (const auto& r : recs) all.insert(r.trajectory.trace_id);
      subsets.emplace_back("all", std::move(all));
    }

    DumpCache cache(dump_dirs[i]);
    const DumpProvider provider = [&](const std::string& id) { return cache.get(id); };
    for (const auto& [name, ids] : subsets) {
      const ProbeDataset data = build_training_set(label_infos(recs, ids, cfg), provider, cfg.train, false);
      if (!data.items.empty() && data.dim != probe.dim()) {
        throw DataError("dumps have dimension " + std::to_string(data.dim) + ", probe expects " +
                        std::to_string(probe.dim()));
      }
      const std::size_t pos = data.positives();
      const std::string ap =
          pos == 0 ? "undefined" : format_fixed(average_precision(score_dataset(probe, data), dataset_labels(data)), 6);
      const std::string line = opts.traces[i].string() + '\t' + name + '\t' + std::to_string(data.items.size()) +
                               '\t' + std::to_string(pos) + '\t' + ap;
      out += line + '\n';
      emit(log, line);
    }
  }
  if (sidecar.contains("layer_stage")) {
    out += "\nlayer\tlearning_rate\tvalidation_ap\tchosen\n";
    for (const auto& c : sidecar["layer_stage"]) {
      const auto layer = c.value("layer", 0u);
      out += std::to_string(layer) + '\t' + format_fixed(c.value("learning_rate", 0.0), 6) + '\t' +
             (c.value("diverged", false) ? std::string("diverged") : format_fixed(c.value("validation_ap", 0.0), 6)) +
             '\t' + (layer == probe.layer ? "*" : "") + '\n';
    }
  }
  if (!opts.out.empty()) write_file_atomic(opts.out, out);
}

std::vector<double> parse_tau_grid(const std::string& spec, std::size_t& quantile_count) {
  quantile_count = 13;
  if (spec == "quantile") return {};
  if (spec.rfind("quantile:", 0) == 0) {
    const std::string n = spec.substr(9);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
    if (ec != std::errc() || p != n.data() + n.size() || v < 2) {
      throw ConfigError("bad quantile count in --tau-grid '" + spec + "'");
    }
    quantile_count = v;
    return {};
  }
  std::vector<double> taus;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || std::isnan(v)) throw std::invalid_argument(item);
      taus.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad threshold '" + item + "' in --tau-grid");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return taus;
}

void frontier(const FrontierOptions& opts, const Logger& log) {
  EquivalenceConfig eq{opts.gamma};
  eq.validate();
  auto recs = load_records(opts.traces, opts.include_truncated);
  if (!opts.split.empty()) {
    const Split split = split_from_json(ordered_json::parse(read_file(opts.split)));
    const std::vector<std::string>* subset = opts.subset == "train"        ? &split.train
                                             : opts.subset == "validation" ? &split.validation
                                             : opts.subset == "test"       ? &split.test
                                                                           : nullptr;
    if (!subset) throw ConfigError("unknown split subset '" + opts.subset + "'");
    const auto keep = as_set(*subset);
    std::erase_if(recs, [&](const TrajectoryRecord& r) { return !keep.count(r.trajectory.trace_id); });
  }
  if (recs.empty()) throw DataError("no trajectories to evaluate");
  const TaskKind task = recs.front().task;
  for (const auto& r : recs) {
    if (r.task != task) throw DataError("frontier inputs mix tasks; evaluate one task at a time");
  }

  std::vector<GateScoreSeries> series;
  series.reserve(recs.size());
  if (opts.gate == "random") {
    for (const auto& r : recs) {
      series.push_back(random_gate(r.trajectory.trace_id, r.trajectory.labels.size(), opts.seed));
    }
  } else if (opts.gate == "oracle") {
    for (const auto& r : recs) series.push_back(oracle_gate(r.trajectory, final_switch_index(r.trajectory, eq)));
  } else if (opts.gate == "probe") {
    if (opts.probe.empty() || opts.dumps.empty()) throw ConfigError("the probe gate needs --probe and --dumps");
    const ProbeModel probe = read_probe(opts.probe);
    DumpCache cache(opts.dumps);
    for (const auto& r : recs) {
      const auto& id = r.trajectory.trace_id;
      const auto dump = cache.get(id);
      if (!dump) throw DataError("no hidden-state dump for trace '" + id + "'");
      if (dump->steps != r.trajectory.labels.size()) {
        throw DataError("dump for '" + id + "' holds " + std::to_string(dump->steps) + " steps, trajectory has " +
                        std::to_string(r.trajectory.labels.size()));
      }
      series.push_back(probe_gate(probe, *dump));
    }
  } else {
    throw ConfigError("unknown gate '" + opts.gate + "' (random, probe or oracle)");
  }

  std::size_t quantiles = 13;
  std::vector<double> taus = parse_tau_grid(opts.tau_grid, quantiles);
  if (taus.empty()) {
    // Oracle scores are 0/1, so the only informative threshold is 1.
    taus = opts.gate == "oracle" ? std::vector<double>{1.0} : quantile_tau_grid(series, quantiles);
  }

  const auto rows = evaluate_frontier(recs, series, taus, task, FrontierConfig{eq});
  write_file_atomic(opts.out_dir / ("frontier_" + opts.gate + ".tsv"), frontier_table(rows, task));
  write_file_atomic(opts.out_dir / ("frontier_" + opts.gate + ".dat"), frontier_plot_data(rows, opts.gate));
  emit(log, opts.gate + " gate: " + std::to_string(rows.size()) + " thresholds over " +
                std::to_string(recs.size()) + " trajectories");
}

}  // namespace thinkstop::pipelines

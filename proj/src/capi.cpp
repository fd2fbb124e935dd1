#include "thinkstop/thinkstop.h"

#include <cmath>
#include <cstring>
#include <new>
#include <string>

#include "datastore.hpp"
#include "errors.hpp"
#include "gating.hpp"
#include "hidden_dump.hpp"
#include "pipelines.hpp"
#include "probe.hpp"
#include "trajectory_metrics.hpp"

using namespace thinkstop;

struct ts_trajectory {
  AnswerTrajectory traj;
};
struct ts_dump {
  HiddenStateDump dump;
};
struct ts_probe {
  ProbeModel probe;
};

namespace {

thread_local std::string g_last_error;

ts_status fail(ts_status code, const char* what) {
  g_last_error = what;
  return code;
}

// Runs fn, mapping exceptions to status codes.
template <class Fn>
ts_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TS_OK;
  } catch (const ConfigError& e) {
    return fail(TS_ERR_CONFIG, e.what());
  } catch (const DataError& e) {
    return fail(TS_ERR_DATA, e.what());
  } catch (const EndpointError& e) {
    return fail(TS_ERR_ENDPOINT, e.what());
  } catch (const ContractError& e) {
    return fail(TS_ERR_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(TS_ERR_OTHER, "out of memory");
  } catch (const std::exception& e) {
    return fail(TS_ERR_OTHER, e.what());
  } catch (...) {
    return fail(TS_ERR_OTHER, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

std::string str(const char* s, const char* fallback = "") { return s ? s : fallback; }

TaskKind task_arg(const char* task) {
  try {
    return parse_task(task);
  } catch (const FormatError& e) {
    throw ContractError(e.what());
  }
}

std::vector<std::filesystem::path> paths(const char* const* items, size_t n) {
  require(n == 0 || items, "path list is NULL");
  std::vector<std::filesystem::path> out;
  for (size_t i = 0; i < n; ++i) {
    require(items[i], "path list holds NULL");
    out.emplace_back(items[i]);
  }
  return out;
}

pipelines::Logger logger(ts_log_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

std::vector<std::int64_t> cum_vector(const int64_t* cum, size_t steps) {
  require(cum, "cum_tokens is NULL");
  return {cum, cum + steps};
}

}  // namespace

extern "C" {

const char* ts_version(void) { return THINKSTOP_VERSION; }

const char* ts_last_error(void) { return g_last_error.c_str(); }

ts_status ts_trajectory_create(const char* trace_id, const char* task, const char* const* labels,
                               const int64_t* cum_tokens, size_t steps, ts_trajectory** out) {
  return guarded([&] {
    require(out && trace_id && task && (labels || steps == 0), "NULL argument");
    *out = nullptr;
    const TaskKind kind = task_arg(task);
    if (kind == TaskKind::SearchQuery) throw ConfigError("search-query trajectories need embeddings");
    AnswerTrajectory t;
    t.trace_id = str(trace_id);
    for (size_t i = 0; i < steps; ++i) {
      require(labels[i], "label is NULL");
      switch (kind) {
        case TaskKind::MCQ: t.labels.emplace_back(Choice{labels[i]}); break;
        case TaskKind::Numeric: t.labels.emplace_back(Token{labels[i]}); break;
        default: t.labels.emplace_back(Tool{labels[i], true}); break;
      }
    }
    t.cum_tokens = cum_vector(cum_tokens, steps);
    t.validate();
    *out = new ts_trajectory{std::move(t)};
  });
}

ts_status ts_trajectory_create_queries(const char* trace_id, const float* embeddings, size_t dim,
                                       const char* const* query_texts, const int64_t* cum_tokens, size_t steps,
                                       ts_trajectory** out) {
  return guarded([&] {
    require(out && trace_id && (embeddings || steps == 0), "NULL argument");
    require(dim > 0, "embedding dimension is zero");
    *out = nullptr;
    AnswerTrajectory t;
    t.trace_id = str(trace_id);
    for (size_t i = 0; i < steps; ++i) {
      Query q;
      q.text = query_texts && query_texts[i] ? query_texts[i] : "";
      q.embedding.assign(embeddings + i * dim, embeddings + (i + 1) * dim);
      t.labels.emplace_back(std::move(q));
    }
    t.cum_tokens = cum_vector(cum_tokens, steps);
    t.validate();
    *out = new ts_trajectory{std::move(t)};
  });
}

void ts_trajectory_free(ts_trajectory* traj) { delete traj; }

size_t ts_trajectory_steps(const ts_trajectory* traj) { return traj ? traj->traj.labels.size() : 0; }

const char* ts_trajectory_label(const ts_trajectory* traj, size_t step) {
  if (!traj || step >= traj->traj.labels.size()) return nullptr;
  return label_text(traj->traj.labels[step]).c_str();
}

ts_status ts_trajectory_hold_for_k(const ts_trajectory* traj, double gamma, int k, ts_trajectory** out) {
  return guarded([&] {
    require(traj && out, "NULL argument");
    *out = nullptr;
    EquivalenceConfig eq{gamma};
    eq.validate();
    *out = new ts_trajectory{hold_for_k(traj->traj, eq, k)};
  });
}

ts_status ts_trajectory_metrics(const ts_trajectory* traj, const ts_metrics_config* cfg, ts_metrics* out) {
  return guarded([&] {
    require(traj && out, "NULL argument");
    const int k = cfg && cfg->k > 0 ? cfg->k : 3;
    const int flip_k = cfg && cfg->flip_k > 0 ? cfg->flip_k : k;
    EquivalenceConfig eq{cfg && cfg->gamma != 0.0 ? cfg->gamma : 0.9};
    eq.validate();
    const MetricsRow r = compute_metrics(traj->traj, eq, SmoothingConfig{k}, flip_k);
    *out = ts_metrics{r.t_star_raw,  r.t_star_denoised,  r.switches_raw,       r.switches_denoised,
                      r.tafs,        r.t_after_raw,      r.t_after_denoised,   r.t_total,
                      r.fraction_after_raw, r.fraction_after_denoised};
  });
}

ts_status ts_dump_read(const char* path, ts_dump** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = nullptr;
    *out = new ts_dump{read_dump(path)};
  });
}

ts_status ts_dump_write(const char* path, uint32_t layers, uint32_t dim, uint32_t steps, const float* data) {
  return guarded([&] {
    require(path && data, "NULL argument");
    HiddenStateDump d;
    d.layers = layers;
    d.dim = dim;
    d.steps = steps;
    d.data.assign(data, data + static_cast<size_t>(layers) * dim * steps);
    write_dump(path, d);
  });
}

void ts_dump_free(ts_dump* dump) { delete dump; }

void ts_dump_shape(const ts_dump* dump, uint32_t* layers, uint32_t* dim, uint32_t* steps) {
  if (layers) *layers = dump ? dump->dump.layers : 0;
  if (dim) *dim = dump ? dump->dump.dim : 0;
  if (steps) *steps = dump ? dump->dump.steps : 0;
}

const float* ts_dump_data(const ts_dump* dump) { return dump ? dump->dump.data.data() : nullptr; }

ts_status ts_probe_load(const char* path, ts_probe** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = nullptr;
    *out = new ts_probe{read_probe(path)};
  });
}

ts_status ts_probe_create(uint32_t layer, const double* w, size_t dim, double b, ts_probe** out) {
  return guarded([&] {
    require(w && out && dim > 0, "NULL argument");
    *out = nullptr;
    ProbeModel p;
    p.w.assign(w, w + dim);
    p.b = b;
    p.layer = layer;
    *out = new ts_probe{std::move(p)};
  });
}

ts_status ts_probe_save(const ts_probe* probe, const char* path) {
  return guarded([&] {
    require(probe && path, "NULL argument");
    write_probe(path, probe->probe);
  });
}

void ts_probe_free(ts_probe* probe) { delete probe; }

uint32_t ts_probe_layer(const ts_probe* probe) { return probe ? probe->probe.layer : 0; }

size_t ts_probe_dim(const ts_probe* probe) { return probe ? probe->probe.dim() : 0; }

ts_status ts_probe_score(const ts_probe* probe, const double* h, size_t dim, double* out) {
  return guarded([&] {
    require(probe && h && out, "NULL argument");
    require(dim == probe->probe.dim(), "feature dimension does not match the probe");
    *out = score(probe->probe, std::span<const double>(h, dim));
  });
}

ts_status ts_probe_score_dump(const ts_probe* probe, const ts_dump* dump, double* scores, size_t capacity) {
  return guarded([&] {
    require(probe && dump && scores, "NULL argument");
    require(capacity >= dump->dump.steps, "score buffer is smaller than the step count");
    const auto series = probe_gate(probe->probe, dump->dump);
    std::copy(series.scores.begin(), series.scores.end(), scores);
  });
}

ts_status ts_random_gate_score(const char* trace_id, size_t step, uint64_t seed, double* out) {
  return guarded([&] {
    require(trace_id && out, "NULL argument");
    *out = random_gate_score(trace_id, step, seed);
  });
}

ts_status ts_stop_index(const double* scores, size_t n, double tau, int64_t* out) {
  return guarded([&] {
    require((scores || n == 0) && out, "NULL argument");
    const auto s = stop_index(std::span<const double>(scores, n), tau);
    *out = s ? static_cast<int64_t>(*s) : -1;
  });
}

ts_status ts_collect(const ts_collect_options* opts, ts_collect_report* report, ts_log_fn log, void* user) {
  return guarded([&] {
    require(opts && opts->dataset && opts->endpoint_config && opts->out_dir, "missing collect option");
    pipelines::CollectOptions o;
    o.dataset = opts->dataset;
    o.endpoint_config = opts->endpoint_config;
    o.out_dir = opts->out_dir;
    o.max_inflight = opts->max_inflight;
    o.seed = opts->seed;
    o.sample = opts->sample;
    o.keep_truncated = opts->keep_truncated != 0;
    const auto r = pipelines::collect(o, logger(log, user));
    if (report) *report = ts_collect_report{r.collected, r.skipped, r.failed};
  });
}

ts_status ts_metrics_run(const ts_metrics_options* opts, ts_log_fn log, void* user) {
  return guarded([&] {
    require(opts && opts->traces && opts->out_dir, "missing metrics option");
    pipelines::MetricsOptions o;
    o.traces = opts->traces;
    o.out_dir = opts->out_dir;
    if (opts->k != 0) o.k = opts->k;
    o.flip_k = opts->flip_k;
    if (opts->gamma != 0.0) o.gamma = opts->gamma;
    o.include_truncated = opts->include_truncated != 0;
    if (opts->bootstrap_resamples != 0) o.bootstrap_resamples = opts->bootstrap_resamples;
    if (opts->confidence != 0.0) o.confidence = opts->confidence;
    o.seed = opts->seed;
    pipelines::metrics(o, logger(log, user));
  });
}

ts_status ts_probe_train(const ts_probe_train_options* opts, ts_log_fn log, void* user) {
  return guarded([&] {
    require(opts && opts->out_dir, "missing probe-train option");
    pipelines::ProbeTrainOptions o;
    o.traces = paths(opts->traces, opts->n_traces);
    o.dumps = paths(opts->dumps, opts->n_dumps);
    o.split_seed = opts->split_seed;
    if (opts->config) o.config = opts->config;
    o.out_dir = opts->out_dir;
    o.union_of_tasks = opts->union_of_tasks != 0;
    pipelines::probe_train(o, logger(log, user));
  });
}

ts_status ts_probe_eval(const ts_probe_eval_options* opts, ts_log_fn log, void* user) {
  return guarded([&] {
    require(opts && opts->probe, "missing probe-eval option");
    pipelines::ProbeEvalOptions o;
    o.probe = opts->probe;
    o.traces = paths(opts->traces, opts->n_traces);
    o.dumps = paths(opts->dumps, opts->n_dumps);
    if (opts->out) o.out = opts->out;
    pipelines::probe_eval(o, logger(log, user));
  });
}

ts_status ts_frontier(const ts_frontier_options* opts, ts_log_fn log, void* user) {
  return guarded([&] {
    require(opts && opts->traces && opts->out_dir, "missing frontier option");
    pipelines::FrontierOptions o;
    o.traces = opts->traces;
    o.gate = str(opts->gate, "random");
    if (opts->probe) o.probe = opts->probe;
    if (opts->dumps) o.dumps = opts->dumps;
    o.tau_grid = str(opts->tau_grid, "quantile");
    o.out_dir = opts->out_dir;
    o.seed = opts->seed;
    if (opts->gamma != 0.0) o.gamma = opts->gamma;
    if (opts->split) o.split = opts->split;
    o.subset = str(opts->subset, "test");
    o.include_truncated = opts->include_truncated != 0;
    pipelines::frontier(o, logger(log, user));
  });
}

}  // extern "C"

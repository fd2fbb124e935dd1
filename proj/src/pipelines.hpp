#pragma once

// End-to-end commands behind the CLI: collect, metrics, probe-train,
// probe-eval and frontier. Each reads and writes files only; all randomness
// derives from the options' seed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "inference_client.hpp"
#include "probe.hpp"
#include "trajectory_engine.hpp"

namespace thinkstop::pipelines {

using Logger = std::function<void(const std::string&)>;

inline constexpr const char* kTracesFile = "traces.jsonl";
inline constexpr const char* kTrajectoriesFile = "trajectories.jsonl";
inline constexpr const char* kFailuresFile = "failures.jsonl";

struct CollectOptions {
  std::filesystem::path dataset;
  std::filesystem::path endpoint_config;
  std::filesystem::path out_dir;
  int max_inflight = 0;  // 0: take the endpoint config value
  std::uint64_t seed = 0;
  std::int64_t sample = -1;  // -1: every row; 0: default size per task; >0: that many rows
  bool keep_truncated = false;
};

struct CollectReport {
  std::size_t collected = 0;
  std::size_t skipped = 0;  // already present in the output
  std::size_t failed = 0;
};

// Endpoint config may carry a "generation" object with temperature,
// max_tokens, answer_max_tokens and top_logprobs.
CollectReport collect(const CollectOptions& opts, const Logger& log = {});

// Same, against an already constructed backend (used by tests).
CollectReport collect_with_backend(const CollectOptions& opts, InferenceBackend& backend,
                                   const EngineConfig& engine, int max_inflight, const Logger& log = {});

struct MetricsOptions {
  std::filesystem::path traces;  // run directory or trajectory file
  int k = 3;
  int flip_k = 0;  // 0: same as k
  double gamma = 0.9;
  std::filesystem::path out_dir;
  bool include_truncated = false;
  int bootstrap_resamples = 10000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
};

// Writes metrics_rows.tsv, summary.tsv and bootstrap.tsv.
void metrics(const MetricsOptions& opts, const Logger& log = {});

struct ProbeTrainOptions {
  std::vector<std::filesystem::path> traces;
  std::vector<std::filesystem::path> dumps;  // one directory, or one per traces input
  std::uint64_t split_seed = 0;
  std::filesystem::path config;  // optional JSON
  std::filesystem::path out_dir;
  bool union_of_tasks = false;
};

// Config JSON keys: steps_per_trace, lr_grid, epochs, batch_size, seed,
// label_source ("raw" | "denoised"), smoothing_k, gamma, exclude_step0,
// reference_layer, split (array of three ratios).
struct ProbeRunConfig {
  ProbeTrainConfig train;
  int smoothing_k = 3;
  double gamma = 0.9;
  double split_ratios[3] = {0.8, 0.1, 0.1};
};
ProbeRunConfig load_probe_run_config(const std::filesystem::path& path);

// Writes probe.prb, probe.json (selection report) and split_<i>.json.
void probe_train(const ProbeTrainOptions& opts, const Logger& log = {});

struct ProbeEvalOptions {
  std::filesystem::path probe;
  std::vector<std::filesystem::path> traces;
  std::vector<std::filesystem::path> dumps;
  std::filesystem::path out;  // report file; empty: log only
};

void probe_eval(const ProbeEvalOptions& opts, const Logger& log = {});

struct FrontierOptions {
  std::filesystem::path traces;
  std::string gate = "random";  // random | probe | oracle
  std::filesystem::path probe;
  std::filesystem::path dumps;
  std::string tau_grid = "quantile";  // "quantile", "quantile:N" or comma-separated values
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  double gamma = 0.9;
  std::filesystem::path split;  // optional split file
  std::string subset = "test";  // used with `split`
  bool include_truncated = false;
};

// Writes frontier_<gate>.tsv and frontier_<gate>.dat.
void frontier(const FrontierOptions& opts, const Logger& log = {});

// Parses a --tau-grid value; empty result means "quantile" with the returned count.
std::vector<double> parse_tau_grid(const std::string& spec, std::size_t& quantile_count);

}  // namespace thinkstop::pipelines

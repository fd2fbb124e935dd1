#pragma once

// Persistence: line-delimited JSON for datasets, traces and trajectories,
// the PRB1 probe record, example-level splits and delimited report tables.
// Every reader rejects malformed input instead of yielding partial records.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gating.hpp"
#include "probe.hpp"
#include "trace_model.hpp"
#include "trajectory_engine.hpp"
#include "trajectory_metrics.hpp"

namespace thinkstop {

using ordered_json = nlohmann::ordered_json;

ordered_json label_to_json(const AnswerLabel& label);
AnswerLabel label_from_json(const ordered_json& j);

ordered_json trace_to_json(const TraceRecord& trace);
TraceRecord trace_from_json(const ordered_json& j);

ordered_json trajectory_to_json(const TrajectoryRecord& rec);
TrajectoryRecord trajectory_from_json(const ordered_json& j);

// Dataset rows: {"id", "task", "context", "gold"?, "options"?, "tools"?}.
// A string gold is read as the task's label kind.
DatasetRow dataset_row_from_json(const ordered_json& j);

std::vector<DatasetRow> read_dataset(const std::filesystem::path& path);

// One compact JSON object per line. Duplicate ids are a DataError.
std::vector<TraceRecord> read_traces(const std::filesystem::path& path);
void write_traces(const std::filesystem::path& path, std::span<const TraceRecord> traces);
std::string serialize_traces(std::span<const TraceRecord> traces);
std::vector<TraceRecord> parse_traces(std::string_view text);

std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path);
void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRecord> records);
std::string serialize_trajectories(std::span<const TrajectoryRecord> records);

// PRB1 probe record (little-endian):
//   char[4] "PRB1", u32 version (1), u32 layer, u32 d, f64[d] w, f64 b
inline constexpr std::uint32_t kProbeVersion = 1;
std::vector<char> encode_probe(const ProbeModel& probe);
ProbeModel decode_probe(std::span<const char> bytes);
void write_probe(const std::filesystem::path& path, const ProbeModel& probe);
ProbeModel read_probe(const std::filesystem::path& path);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Sorts, then shuffles by seed. Validation and test sizes are floor(r * N);
// the remainder goes to train.
Split split_ids(std::vector<std::string> ids, double train_ratio, double validation_ratio, double test_ratio,
                std::uint64_t seed);
ordered_json split_to_json(const Split& split);
Split split_from_json(const ordered_json& j);

// Fixed-precision decimal, identical on every platform.
std::string format_fixed(double v, int decimals);

std::string metrics_rows_table(std::span<const MetricsRow> rows);
std::string summary_table(const MetricsSummary& s);
std::string frontier_table(std::span<const FrontierRow> rows, TaskKind task);
// Two columns per gate: x = mean tokens saved, y = quality.
std::string frontier_plot_data(std::span<const FrontierRow> rows, const std::string& gate);

// Default corpus sizes per task when sampling a dataset.
std::size_t default_sample_size(TaskKind task);

}  // namespace thinkstop

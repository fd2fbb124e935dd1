#pragma once

// Full-trace collection and per-step forced answer completion.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inference_client.hpp"
#include "segmenter.hpp"
#include "trace_model.hpp"

namespace thinkstop {

// One input example with its chat template already applied.
struct DatasetRow {
  std::string id;
  TaskKind task = TaskKind::MCQ;
  std::string context;
  std::optional<AnswerLabel> gold;
  std::optional<std::vector<std::string>> options;
  std::optional<std::vector<std::string>> tools;
};

struct EngineConfig {
  GenerationParams reasoning;  // full trace generation
  GenerationParams answer;     // forced completions; temperature should match `reasoning`
  SegmentationRules segmentation;
  std::uint64_t seed = 0;
  int step_concurrency = 1;
  bool keep_truncated = false;  // record truncated traces with a flag instead of failing

  EngineConfig();
};

// Option symbols used when an MCQ example does not declare any.
const std::vector<std::string>& default_options();

// Samples reasoning up to </think>, segments it, then samples the final
// answer after </think> + prefix with the task's stop rule.
TraceRecord collect_trace(InferenceBackend& backend, const DatasetRow& row, const EngineConfig& cfg);

// A_i for 0 <= step <= n. MCQ ties resolve to the smallest option symbol.
AnswerLabel forced_answer(InferenceBackend& backend, const TraceRecord& trace, std::size_t step,
                          const EngineConfig& cfg);

// A_0..A_n plus T_0..T_n. Steps may be queried concurrently; results are
// assembled in step order.
AnswerTrajectory build_trajectory(InferenceBackend& backend, const TraceRecord& trace,
                                  const EngineConfig& cfg);

}  // namespace thinkstop

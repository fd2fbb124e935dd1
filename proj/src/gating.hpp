#pragma once

// Early-stopping gates and the tokens-saved vs. quality frontier, evaluated
// by offline replay of recorded trajectories.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hidden_dump.hpp"
#include "probe.hpp"
#include "trace_model.hpp"

namespace thinkstop {

struct GateScoreSeries {
  std::string trace_id;
  std::vector<double> scores;  // m_0..m_n
};

// m_i ~ U(0,1) from a counter-keyed hash of (seed, trace_id, i): the value of
// one step does not depend on which other steps or traces were scored.
GateScoreSeries random_gate(const std::string& trace_id, std::size_t length, std::uint64_t seed);
double random_gate_score(const std::string& trace_id, std::size_t step, std::uint64_t seed);

// m_i = score(probe, h_i) at the probe's layer for every step in the dump.
GateScoreSeries probe_gate(const ProbeModel& probe, const HiddenStateDump& dump);

// Ideal gate: 1 from step t*+1 on, 0 before.
GateScoreSeries oracle_gate(const AnswerTrajectory& traj, std::int64_t t_star);

// Smallest i with m_i >= tau, or nullopt when generation would run to the end.
std::optional<std::size_t> stop_index(std::span<const double> scores, double tau);

struct FrontierRow {
  double tau = 0.0;
  double mean_tokens_saved = 0.0;
  double token_pct_saved = 0.0;  // 100 * sum saved / sum T_n
  // Accuracy drop in percentage points (signed); for SearchQuery, the mean
  // cosine between the stopped and the final query.
  double quality_delta = 0.0;
  std::size_t n_examples = 0;
};

struct FrontierConfig {
  EquivalenceConfig equivalence;
};

// One row per tau, sorted by tau. `series` must hold one entry per record,
// matched by trace id. Accuracy tasks need gold labels (DataError otherwise).
std::vector<FrontierRow> evaluate_frontier(std::span<const TrajectoryRecord> records,
                                           std::span<const GateScoreSeries> series,
                                           std::span<const double> tau_grid, TaskKind task,
                                           const FrontierConfig& cfg = {});

// `count` evenly spaced quantiles (0, 1/(count-1), ..., 1) of the pooled
// scores, linear interpolation between order statistics.
std::vector<double> quantile_tau_grid(std::span<const GateScoreSeries> series, std::size_t count = 13);

}  // namespace thinkstop

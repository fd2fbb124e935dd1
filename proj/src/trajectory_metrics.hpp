#pragma once

// Answer-trajectory metrics: final switch index, switch counts, transient
// flips, hold-for-k smoothing, tokens after the final switch, and dataset
// summaries with bootstrap intervals.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trace_model.hpp"

namespace thinkstop {

struct SmoothingConfig {
  int k = 3;

  void validate() const;
};

// t*: the largest i in [0, n) with A_i not equivalent to A_{i+1}, or -1.
std::int64_t final_switch_index(const AnswerTrajectory& traj, const EquivalenceConfig& cfg);

std::int64_t answer_switches(const AnswerTrajectory& traj, const EquivalenceConfig& cfg);

// Number of anchors i in [0, n-k-1] from which the answer leaves for between
// 1 and k steps and then returns. Each anchor counts at most once.
std::int64_t transient_flips(const AnswerTrajectory& traj, const EquivalenceConfig& cfg, int k = 3);

// Causal hold-for-k filter. The smoothed answer at step i >= k-1 takes A_i
// only when A_{i-k+1}..A_i are all equivalent to A_i; otherwise it keeps the
// previous smoothed answer. Step 0 is passed through unchanged.
AnswerTrajectory hold_for_k(const AnswerTrajectory& traj, const EquivalenceConfig& cfg, int k = 3);

// T_n - T_{t*+1}. Throws ContractError if t_star is outside [-1, n-1].
std::int64_t tokens_after(const AnswerTrajectory& traj, std::int64_t t_star);

struct MetricsRow {
  std::string trace_id;
  std::int64_t t_star_raw = -1;
  std::int64_t t_star_denoised = -1;
  std::int64_t switches_raw = 0;
  std::int64_t switches_denoised = 0;
  std::int64_t tafs = 0;
  std::int64_t t_after_raw = 0;
  std::int64_t t_after_denoised = 0;
  std::int64_t t_total = 0;
  double fraction_after_raw = 0.0;
  double fraction_after_denoised = 0.0;
};

// All per-trace metrics; denoised values run the raw operators on
// hold_for_k(traj) with the same cumulative token counts.
MetricsRow compute_metrics(const AnswerTrajectory& traj, const EquivalenceConfig& cfg,
                           const SmoothingConfig& smoothing, int flip_k);

// Table-1-shaped dataset summary. Percentages are in [0, 100].
struct MetricsSummary {
  std::size_t n = 0;
  double no_switch_raw_pct = 0.0;
  double no_switch_denoised_pct = 0.0;
  double switches_raw = 0.0;
  double switches_denoised = 0.0;
  double tafs = 0.0;
  double t_after_raw = 0.0;
  double t_after_raw_pct = 0.0;
  double t_after_denoised = 0.0;
  double t_after_denoised_pct = 0.0;
  // Same means restricted to traces with at least one switch (t* >= 0);
  // zero when no trace qualifies.
  std::size_t n_switched_raw = 0;
  double t_after_raw_given_switch = 0.0;
  double t_after_raw_pct_given_switch = 0.0;
  std::size_t n_switched_denoised = 0;
  double t_after_denoised_given_switch = 0.0;
  double t_after_denoised_pct_given_switch = 0.0;
};

MetricsSummary summarize(std::span<const MetricsRow> rows);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

// Percentile bootstrap interval of the mean (linear interpolation between
// order statistics). Deterministic for a given seed.
Interval bootstrap_mean_ci(std::span<const double> values, int resamples, double confidence,
                           std::uint64_t seed);

}  // namespace thinkstop

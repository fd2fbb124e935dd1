#include "gating.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "errors.hpp"
#include "rng.hpp"

namespace thinkstop {

double random_gate_score(const std::string& trace_id, std::size_t step, std::uint64_t seed) {
  return rng::to_unit(rng::derive(seed, "random-gate/" + trace_id, step));
}

GateScoreSeries random_gate(const std::string& trace_id, std::size_t length, std::uint64_t seed) {
  GateScoreSeries s{trace_id, {}};
  s.scores.reserve(length);
  for (std::size_t i = 0; i < length; ++i) s.scores.push_back(random_gate_score(trace_id, i, seed));
  return s;
}

GateScoreSeries probe_gate(const ProbeModel& probe, const HiddenStateDump& dump) {
  if (probe.layer >= dump.layers) {
    throw DataError("dump for '" + dump.trace_id + "' has " + std::to_string(dump.layers) +
                    " layers, probe reads layer " + std::to_string(probe.layer));
  }
  if (probe.dim() != dump.dim) {
    throw DataError("dump for '" + dump.trace_id + "' has dimension " + std::to_string(dump.dim) +
                    ", probe expects " + std::to_string(probe.dim()));
  }
  GateScoreSeries s{dump.trace_id, {}};
  s.scores.reserve(dump.steps);
  for (std::uint32_t i = 0; i < dump.steps; ++i) s.scores.push_back(score(probe, dump.at(i, probe.layer)));
  return s;
}

GateScoreSeries oracle_gate(const AnswerTrajectory& traj, std::int64_t t_star) {
  GateScoreSeries s{traj.trace_id, {}};
  s.scores.reserve(traj.labels.size());
  for (std::size_t i = 0; i < traj.labels.size(); ++i) {
    s.scores.push_back(static_cast<std::int64_t>(i) >= t_star + 1 ? 1.0 : 0.0);
  }
  return s;
}

std::optional<std::size_t> stop_index(std::span<const double> scores, double tau) {
  if (std::isnan(tau)) throw ContractError("threshold is NaN");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= tau) return i;
  }
  return std::nullopt;
}

std::vector<FrontierRow> evaluate_frontier(std::span<const TrajectoryRecord> records,
                                           std::span<const GateScoreSeries> series,
                                           std::span<const double> tau_grid, TaskKind task,
                                           const FrontierConfig& cfg) {
  if (tau_grid.empty()) throw ContractError("tau grid is empty");
  std::map<std::string, const GateScoreSeries*> by_id;
  for (const auto& s : series) by_id[s.trace_id] = &s;

  const bool similarity = task == TaskKind::SearchQuery;
  std::vector<const GateScoreSeries*> matched;
  matched.reserve(records.size());
  for (const auto& r : records) {
    const auto& traj = r.trajectory;
    auto it = by_id.find(traj.trace_id);
    if (it == by_id.end()) throw DataError("no gate scores for trace '" + traj.trace_id + "'");
    if (it->second->scores.size() != traj.labels.size()) {
      throw DataError("gate scores for '" + traj.trace_id + "' have length " +
                      std::to_string(it->second->scores.size()) + ", trajectory has " +
                      std::to_string(traj.labels.size()));
    }
    if (!similarity && !r.gold) throw DataError("trace '" + traj.trace_id + "' has no gold label");
    matched.push_back(it->second);
  }

  std::vector<double> taus(tau_grid.begin(), tau_grid.end());
  std::stable_sort(taus.begin(), taus.end());

  std::vector<FrontierRow> rows;
  rows.reserve(taus.size());
  for (double tau : taus) {
    FrontierRow row;
    row.tau = tau;
    row.n_examples = records.size();
    double saved = 0.0, total = 0.0, quality_full = 0.0, quality_stop = 0.0;
    for (std::size_t e = 0; e < records.size(); ++e) {
      const auto& traj = records[e].trajectory;
      const std::size_t n = traj.labels.size() - 1;
      const auto s = stop_index(matched[e]->scores, tau);
      const std::size_t at = s.value_or(n);
      saved += static_cast<double>(traj.cum_tokens[n] - traj.cum_tokens[at]);
      total += static_cast<double>(traj.cum_tokens[n]);
      if (similarity) {
        quality_stop += dot(std::get<Query>(traj.labels[at]).embedding, std::get<Query>(traj.labels[n]).embedding);
      } else {
        quality_full += equivalent(traj.labels[n], *records[e].gold, cfg.equivalence) ? 1.0 : 0.0;
        quality_stop += equivalent(traj.labels[at], *records[e].gold, cfg.equivalence) ? 1.0 : 0.0;
      }
    }
    if (!records.empty()) {
      const double m = static_cast<double>(records.size());
      row.mean_tokens_saved = saved / m;
      row.quality_delta = similarity ? quality_stop / m : 100.0 * (quality_full - quality_stop) / m;
    }
    row.token_pct_saved = total > 0.0 ? 100.0 * saved / total : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> quantile_tau_grid(std::span<const GateScoreSeries> series, std::size_t count) {
  if (count < 2) throw ConfigError("a quantile grid needs at least 2 points");
  std::vector<double> pooled;
  for (const auto& s : series) pooled.insert(pooled.end(), s.scores.begin(), s.scores.end());
  if (pooled.empty()) throw DataError("no gate scores to build a threshold grid from");
  std::sort(pooled.begin(), pooled.end());

  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const double pos = static_cast<double>(q) / static_cast<double>(count - 1) * static_cast<double>(pooled.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, pooled.size() - 1);
    grid.push_back(pooled[lo] + (pos - static_cast<double>(lo)) * (pooled[hi] - pooled[lo]));
  }
  return grid;
}

}  // namespace thinkstop

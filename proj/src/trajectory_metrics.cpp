#include "trajectory_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace thinkstop {

void SmoothingConfig::validate() const {
  if (k < 1) throw ConfigError("smoothing k must be >= 1");
}

std::int64_t final_switch_index(const AnswerTrajectory& traj, const EquivalenceConfig& cfg) {
  const auto& a = traj.labels;
  for (std::size_t i = a.size(); i-- > 1;) {
    if (!equivalent(a[i - 1], a[i], cfg)) return static_cast<std::int64_t>(i - 1);
  }
  return -1;
}

std::int64_t answer_switches(const AnswerTrajectory& traj, const EquivalenceConfig& cfg) {
  const auto& a = traj.labels;
  std::int64_t count = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (!equivalent(a[i - 1], a[i], cfg)) ++count;
  }
  return count;
}

std::int64_t transient_flips(const AnswerTrajectory& traj, const EquivalenceConfig& cfg, int k) {
  if (k < 1) throw ContractError("flip length k must be >= 1");
  const auto& a = traj.labels;
  const auto n = static_cast<std::int64_t>(traj.steps());
  std::int64_t count = 0;
  for (std::int64_t i = 0; i <= n - k - 1; ++i) {
    // Walk away from A_i; the first step that returns to it closes a flip of
    // length ell, provided ell <= k.
    for (std::int64_t ell = 1; ell <= k; ++ell) {
      if (equivalent(a[i], a[i + ell], cfg)) break;  // A_{i+ell} never left
      if (equivalent(a[i], a[i + ell + 1], cfg)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

AnswerTrajectory hold_for_k(const AnswerTrajectory& traj, const EquivalenceConfig& cfg, int k) {
  if (k < 1) throw ContractError("hold-for-k requires k >= 1");
  AnswerTrajectory out;
  out.trace_id = traj.trace_id;
  out.cum_tokens = traj.cum_tokens;
  const auto& a = traj.labels;
  out.labels.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i == 0) {
      out.labels.push_back(a[0]);
      continue;
    }
    bool held = i + 1 >= static_cast<std::size_t>(k);
    for (std::size_t j = 1; held && j < static_cast<std::size_t>(k); ++j) {
      held = equivalent(a[i - j], a[i], cfg);
    }
    out.labels.push_back(held ? a[i] : out.labels.back());
  }
  return out;
}

std::int64_t tokens_after(const AnswerTrajectory& traj, std::int64_t t_star) {
  const auto n = static_cast<std::int64_t>(traj.steps());
  if (t_star < -1 || t_star > n - 1 || traj.cum_tokens.size() != traj.labels.size()) {
    throw ContractError("t* = " + std::to_string(t_star) + " outside [-1, " + std::to_string(n - 1) + "]");
  }
  return traj.cum_tokens.back() - traj.cum_tokens[static_cast<std::size_t>(t_star + 1)];
}

MetricsRow compute_metrics(const AnswerTrajectory& traj, const EquivalenceConfig& cfg,
                           const SmoothingConfig& smoothing, int flip_k) {
  smoothing.validate();
  MetricsRow row;
  row.trace_id = traj.trace_id;
  row.t_total = traj.total_tokens();
  row.t_star_raw = final_switch_index(traj, cfg);
  row.switches_raw = answer_switches(traj, cfg);
  row.tafs = transient_flips(traj, cfg, flip_k);
  row.t_after_raw = tokens_after(traj, row.t_star_raw);

  const AnswerTrajectory smooth = hold_for_k(traj, cfg, smoothing.k);
  row.t_star_denoised = final_switch_index(smooth, cfg);
  row.switches_denoised = answer_switches(smooth, cfg);
  row.t_after_denoised = tokens_after(smooth, row.t_star_denoised);

  if (row.t_total > 0) {
    row.fraction_after_raw = static_cast<double>(row.t_after_raw) / static_cast<double>(row.t_total);
    row.fraction_after_denoised =
        static_cast<double>(row.t_after_denoised) / static_cast<double>(row.t_total);
  }
  return row;
}

MetricsSummary summarize(std::span<const MetricsRow> rows) {
  if (rows.empty()) throw ContractError("cannot summarize an empty set of traces");
  MetricsSummary s;
  s.n = rows.size();
  double none_raw = 0, none_den = 0;
  for (const auto& r : rows) {
    none_raw += r.t_star_raw == -1;
    none_den += r.t_star_denoised == -1;
    s.switches_raw += static_cast<double>(r.switches_raw);
    s.switches_denoised += static_cast<double>(r.switches_denoised);
    s.tafs += static_cast<double>(r.tafs);
    s.t_after_raw += static_cast<double>(r.t_after_raw);
    s.t_after_raw_pct += r.fraction_after_raw;
    s.t_after_denoised += static_cast<double>(r.t_after_denoised);
    s.t_after_denoised_pct += r.fraction_after_denoised;
    if (r.t_star_raw >= 0) {
      ++s.n_switched_raw;
      s.t_after_raw_given_switch += static_cast<double>(r.t_after_raw);
      s.t_after_raw_pct_given_switch += r.fraction_after_raw;
    }
    if (r.t_star_denoised >= 0) {
      ++s.n_switched_denoised;
      s.t_after_denoised_given_switch += static_cast<double>(r.t_after_denoised);
      s.t_after_denoised_pct_given_switch += r.fraction_after_denoised;
    }
  }
  const double n = static_cast<double>(s.n);
  s.no_switch_raw_pct = 100.0 * none_raw / n;
  s.no_switch_denoised_pct = 100.0 * none_den / n;
  s.switches_raw /= n;
  s.switches_denoised /= n;
  s.tafs /= n;
  s.t_after_raw /= n;
  s.t_after_raw_pct *= 100.0 / n;
  s.t_after_denoised /= n;
  s.t_after_denoised_pct *= 100.0 / n;
  if (s.n_switched_raw > 0) {
    const double m = static_cast<double>(s.n_switched_raw);
    s.t_after_raw_given_switch /= m;
    s.t_after_raw_pct_given_switch *= 100.0 / m;
  }
  if (s.n_switched_denoised > 0) {
    const double m = static_cast<double>(s.n_switched_denoised);
    s.t_after_denoised_given_switch /= m;
    s.t_after_denoised_pct_given_switch *= 100.0 / m;
  }
  return s;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_mean_ci(std::span<const double> values, int resamples, double confidence,
                           std::uint64_t seed) {
  if (values.empty()) throw ContractError("bootstrap needs at least one value");
  if (resamples < 1) throw ConfigError("bootstrap resamples must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");

  Interval out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());

  rng::Engine eng(rng::derive(seed, "bootstrap"));
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[rng::below(eng, values.size())];
    m = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - confidence;
  out.low = quantile_sorted(means, alpha / 2.0);
  out.high = quantile_sorted(means, 1.0 - alpha / 2.0);
  return out;
}

}  // namespace thinkstop

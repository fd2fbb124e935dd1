// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include "datastore.hpp"
#include "gating.hpp"
#include "oracles.hpp"
#include "pipelines.hpp"
#include "probe.hpp"
#include "support/helpers.hpp"
#include "trajectory_metrics.hpp"

using namespace thinkstop;
namespace pl = thinkstop::pipelines;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int decimals = 2) { return format_fixed(v, decimals); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct RandomCorpus {
  std::vector<AnswerTrajectory> trajs;
};

RandomCorpus random_corpus(std::size_t count, std::uint64_t seed) {
  RandomCorpus c;
  std::mt19937_64 gen(seed);
  for (std::size_t t = 0; t < count; ++t) {
    const int alphabet = 1 + static_cast<int>(gen() % 5);
    const std::size_t len = 1 + gen() % 50;
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('A' + gen() % alphabet);
    auto traj = testing::letters(s, "r" + std::to_string(t));
    for (std::size_t i = 1; i < len; ++i) {
      traj.cum_tokens[i] = traj.cum_tokens[i - 1] + static_cast<std::int64_t>(gen() % 60);
    }
    c.trajs.push_back(std::move(traj));
  }
  return c;
}

const EquivalenceConfig kEq;
constexpr int kWindows[] = {1, 2, 3, 5};

void metric_oracle(const RandomCorpus& corpus) {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0, checks = 0;
  for (const auto& t : corpus.trajs) {
    const auto a = testing::as_ints(t);
    const auto t_star = final_switch_index(t, kEq);
    mismatches += t_star != oracle::t_star(a);
    mismatches += answer_switches(t, kEq) != oracle::switches(a);
    mismatches += tokens_after(t, t_star) != oracle::tokens_after(t.cum_tokens, oracle::t_star(a));
    checks += 3;
    for (int k : kWindows) {
      mismatches += transient_flips(t, kEq, k) != oracle::tafs(a, k);
      mismatches += testing::as_ints(hold_for_k(t, kEq, k)) != oracle::hold_for_k(a, k);
      checks += 2;
    }
  }
  const double secs = seconds_since(t0);
  report(mismatches == 0 && secs < 10.0, "metric-oracle equivalence",
         std::to_string(corpus.trajs.size()) + " trajectories, " + std::to_string(checks) + " comparisons, " +
             std::to_string(mismatches) + " mismatches, " + fmt(secs, 3) + " s (limit 10 s)");
}

// Flips of length <= k-1 at any anchor of the series.
std::int64_t short_flips_anywhere(const oracle::Series& a, int k) {
  if (k < 2) return 0;
  std::int64_t total = 0;
  const auto n = static_cast<std::int64_t>(a.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t l = 1; l <= k - 1 && i + l + 1 < n; ++l) {
      bool differ = true;
      for (std::int64_t j = 1; j <= l; ++j) differ = differ && a[i + j] != a[i];
      if (differ && a[i + l + 1] == a[i]) {
        ++total;
        break;
      }
    }
  }
  return total;
}

void denoising(const RandomCorpus& corpus) {
  std::size_t short_flips = 0, increases = 0;
  for (const auto& t : corpus.trajs) {
    for (int k : kWindows) {
      const auto smooth = hold_for_k(t, kEq, k);
      short_flips += static_cast<std::size_t>(short_flips_anywhere(testing::as_ints(smooth), k));
      if (k >= 2) short_flips += static_cast<std::size_t>(transient_flips(smooth, kEq, k - 1));
      increases += answer_switches(smooth, kEq) > answer_switches(t, kEq);
    }
  }
  const auto ref = testing::letters(testing::kReference, "reference");
  const auto raw_switches = answer_switches(ref, kEq);
  const auto tafs = transient_flips(ref, kEq, 3);
  const auto denoised = answer_switches(hold_for_k(ref, kEq, 3), kEq);
  const bool props = short_flips == 0 && increases == 0;
  const bool reference_ok = raw_switches == 11 && tafs == 6 && denoised == 1;
  report(props && reference_ok, "denoising properties",
         "short flips after smoothing " + std::to_string(short_flips) + ", denoised > raw in " +
             std::to_string(increases) + " cases; reference series raw switches " + std::to_string(raw_switches) +
             " (expected 11), TAFs at k=3 " + std::to_string(tafs) + " (expected 6), denoised switches " +
             std::to_string(denoised) + " (expected 1)");
}

void probe_correctness() {
  // gradient vs central differences on 100 random points
  std::mt19937_64 gen(99);
  std::normal_distribution<double> nd(0, 1);
  const std::size_t d = 16, m = 32;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(d), x(m * d), gw(d);
    std::vector<int> y(m);
    for (auto& v : w) v = nd(gen);
    for (auto& v : x) v = nd(gen);
    for (auto& v : y) v = static_cast<int>(gen() % 2);
    const double b = nd(gen);
    double gb = 0;
    bce_gradient(w, b, x, y, gw, gb);
    const double h = 1e-6;
    for (std::size_t j = 0; j <= d; ++j) {
      std::vector<double> wp = w, wm = w;
      double bp = b, bm = b;
      (j < d ? wp[j] : bp) += h;
      (j < d ? wm[j] : bm) -= h;
      const double fd = (bce_loss(wp, bp, x, y) - bce_loss(wm, bm, x, y)) / (2 * h);
      const double an = j < d ? gw[j] : gb;
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::max(std::abs(fd), std::abs(an))));
    }
  }

  // planted separator at one layer, 2000 sampled training points
  const std::uint32_t layers = 6, signal = 4;
  const auto direction = testing::unit_direction(static_cast<std::uint32_t>(d), 5);
  auto corpus = [&](const std::string& prefix, int traces, std::uint64_t seed,
                    std::map<std::string, std::shared_ptr<const HiddenStateDump>>& dumps) {
    std::mt19937_64 g(seed);
    std::vector<TraceLabelInfo> infos;
    for (int i = 0; i < traces; ++i) {
      const std::uint32_t n = 10 + static_cast<std::uint32_t>(g() % 20);
      const std::int64_t t_star = static_cast<std::int64_t>(g() % (n + 1)) - 1;
      const std::string id = prefix + std::to_string(i);
      infos.push_back({id, n, t_star});
      dumps[id] = std::make_shared<const HiddenStateDump>(
          testing::synthetic_dump(id, n + 1, t_star, layers, static_cast<std::uint32_t>(d), signal, direction, g, 4.0));
    }
    return infos;
  };
  std::map<std::string, std::shared_ptr<const HiddenStateDump>> dumps;
  const auto train_infos = corpus("tr", 250, 1, dumps);
  const auto val_infos = corpus("va", 60, 2, dumps);
  const DumpProvider provider = [&](const std::string& id) { return dumps.at(id); };

  const auto t0 = Clock::now();
  ProbeTrainConfig cfg;
  const auto train_set = build_training_set(train_infos, provider, cfg, false);
  const auto balanced = build_training_set(train_infos, provider, cfg, true);
  const auto val_set = build_training_set(val_infos, provider, cfg, false);
  const auto result = train(balanced, val_set, cfg);
  const double secs = seconds_since(t0);
  const double ap = result.probe.meta.validation_ap;
  const std::size_t cells = result.lr_stage.size() + result.layer_stage.size();

  report(worst < 1e-5 && ap >= 0.99 && secs < 60.0 && result.probe.layer == signal, "probe correctness",
         "max relative gradient error " + sci(worst) + " (limit 1e-5); " +
             std::to_string(train_set.items.size()) + " training points, validation AP " + fmt(ap, 4) +
             " at layer " + std::to_string(result.probe.layer) + " (planted " + std::to_string(signal) + "); " +
             std::to_string(cells) + " grid cells in " + fmt(secs, 2) + " s (limit 60 s)");
}

std::vector<GateScoreSeries> synthetic_probe_scores(const std::vector<TrajectoryRecord>& recs) {
  // A fixed probe reading a planted direction from synthetic dumps.
  const std::uint32_t dim = 8;
  const auto direction = testing::unit_direction(dim, 3);
  ProbeModel probe;
  probe.layer = 1;
  probe.w = direction;
  probe.b = 0;
  std::mt19937_64 gen(8);
  std::vector<GateScoreSeries> out;
  for (const auto& r : recs) {
    const auto t_star = final_switch_index(r.trajectory, kEq);
    const auto dump = testing::synthetic_dump(r.trajectory.trace_id, static_cast<std::uint32_t>(r.trajectory.labels.size()),
                                              t_star, 2, dim, 1, direction, gen);
    out.push_back(probe_gate(probe, dump));
  }
  return out;
}

void frontier_properties() {
  std::size_t violations = 0, rows_checked = 0;
  std::string detail;
  for (const char* name : {"mcq50", "metrics5", "search12"}) {
    const auto recs = read_trajectories(testing::kFixtures / name / "trajectories.jsonl");
    const TaskKind task = recs.front().task;
    std::map<std::string, std::vector<GateScoreSeries>> gates;
    for (const auto& r : recs) {
      gates["random"].push_back(random_gate(r.trajectory.trace_id, r.trajectory.labels.size(), 11));
      gates["oracle"].push_back(oracle_gate(r.trajectory, final_switch_index(r.trajectory, kEq)));
    }
    gates["probe"] = synthetic_probe_scores(recs);
    for (const auto& [gate, series] : gates) {
      auto taus = quantile_tau_grid(series, 13);
      for (double t : {0.0, 0.25, 0.5, 0.75, 1.0, 1.5}) taus.push_back(t);
      const auto rows = evaluate_frontier(recs, series, taus, task);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        ++rows_checked;
        if (rows[i].mean_tokens_saved > rows[i - 1].mean_tokens_saved) ++violations;
      }
    }
  }

  const auto recs = read_trajectories(testing::kFixtures / "mcq50" / "trajectories.jsonl");
  std::vector<GateScoreSeries> oracle;
  double mean_after = 0;
  for (const auto& r : recs) {
    const auto t_star = final_switch_index(r.trajectory, kEq);
    oracle.push_back(oracle_gate(r.trajectory, t_star));
    mean_after += static_cast<double>(oracle::tokens_after(r.trajectory.cum_tokens, t_star));
  }
  mean_after /= static_cast<double>(recs.size());
  const std::vector<double> one{1.0};
  const auto row = evaluate_frontier(recs, oracle, one, TaskKind::MCQ).front();
  const bool identity = row.quality_delta == 0.0 && std::abs(row.mean_tokens_saved - mean_after) < 1e-9;
  report(violations == 0 && identity, "frontier properties",
         std::to_string(rows_checked) + " adjacent tau pairs over 3 gates x 3 fixtures, " +
             std::to_string(violations) + " increases; oracle on " + std::to_string(recs.size()) +
             " trajectories: quality_delta " + fmt(row.quality_delta, 6) + ", tokens saved " +
             fmt(row.mean_tokens_saved, 4) + " vs mean tokens_after " + fmt(mean_after, 4));
}

bool same_file(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && testing::slurp(a) == testing::slurp(b);
}

void determinism() {
  std::size_t compared = 0, differ = 0;
  std::vector<std::string> bad;
  auto check = [&](const fs::path& a, const fs::path& b, const std::string& label) {
    ++compared;
    if (!same_file(a, b)) {
      ++differ;
      bad.push_back(label);
    }
  };

  const auto root = testing::scratch("acceptance-determinism");
  testing::MockServer server(testing::kFixtures / "mock" / "recording.json");
  testing::spit(root / "endpoint.json", server.endpoint_json().dump(2));
  for (const char* run : {"1", "2"}) {
    pl::CollectOptions co;
    co.dataset = testing::kFixtures / "mock" / "dataset.jsonl";
    co.endpoint_config = root / "endpoint.json";
    co.out_dir = root / run / "collect";
    co.seed = 1;
    co.max_inflight = 2;
    pl::collect(co);

    pl::MetricsOptions mo;
    mo.traces = testing::kFixtures / "metrics5";
    mo.out_dir = root / run / "metrics5";
    mo.seed = 3;
    mo.bootstrap_resamples = 1000;
    pl::metrics(mo);

    pl::FrontierOptions fo;
    fo.traces = testing::kFixtures / "mcq50";
    fo.out_dir = root / run / "mcq50";
    fo.seed = 7;
    pl::frontier(fo);
    fo.gate = "oracle";
    pl::frontier(fo);
  }
  const std::vector<std::string> files{"collect/traces.jsonl",        "collect/trajectories.jsonl",
                                       "collect/failures.jsonl",      "metrics5/metrics_rows.tsv",
                                       "metrics5/summary.tsv",        "metrics5/bootstrap.tsv",
                                       "mcq50/frontier_random.tsv",   "mcq50/frontier_random.dat",
                                       "mcq50/frontier_oracle.tsv"};
  for (const auto& f : files) {
    check(root / "1" / f, root / "2" / f, f + " (run 1 vs 2)");
    check(root / "1" / f, testing::kGolden / f, f + " (vs golden)");
  }

  // HSD1 and PRB1 round trips
  std::mt19937_64 gen(12);
  std::size_t roundtrips = 0, roundtrip_failures = 0;
  for (int i = 0; i < 20; ++i) {
    HiddenStateDump d;
    d.layers = 1 + static_cast<std::uint32_t>(gen() % 6);
    d.dim = 1 + static_cast<std::uint32_t>(gen() % 40);
    d.steps = 1 + static_cast<std::uint32_t>(gen() % 30);
    for (std::size_t k = 0; k < static_cast<std::size_t>(d.layers) * d.dim * d.steps; ++k) {
      const std::uint32_t bits = static_cast<std::uint32_t>(gen());
      float f;
      std::memcpy(&f, &bits, 4);
      d.data.push_back(std::isfinite(f) ? f : 0.0f);
    }
    const auto p = root / ("d" + std::to_string(i) + ".hsd");
    write_dump(p, d);
    const auto back = read_dump(p);
    ++roundtrips;
    if (back.data.size() != d.data.size() || std::memcmp(back.data.data(), d.data.data(), d.data.size() * 4) != 0 ||
        back.layers != d.layers || back.dim != d.dim || back.steps != d.steps) {
      ++roundtrip_failures;
    }

    ProbeModel probe;
    probe.layer = static_cast<std::uint32_t>(gen() % 64);
    for (std::uint32_t k = 0; k < d.dim; ++k) {
      const std::uint64_t bits = gen();
      double v;
      std::memcpy(&v, &bits, 8);
      probe.w.push_back(std::isfinite(v) ? v : 0.0);
    }
    probe.b = -1.0 / 3.0;
    const auto pp = root / ("p" + std::to_string(i) + ".prb");
    write_probe(pp, probe);
    const auto pb = read_probe(pp);
    ++roundtrips;
    if (pb.layer != probe.layer || std::memcmp(pb.w.data(), probe.w.data(), probe.w.size() * 8) != 0 ||
        std::memcmp(&pb.b, &probe.b, 8) != 0) {
      ++roundtrip_failures;
    }
  }

  std::string detail = std::to_string(compared) + " file comparisons, " + std::to_string(differ) + " differ";
  for (const auto& b : bad) detail += " [" + b + "]";
  detail += "; " + std::to_string(roundtrips) + " HSD1/PRB1 round trips, " + std::to_string(roundtrip_failures) +
            " not bit-exact";
  report(differ == 0 && roundtrip_failures == 0, "determinism and formats", detail);
}

std::string header(const fs::path& p) {
  const auto s = testing::slurp(p);
  return s.substr(0, s.find('\n'));
}

void report_schemas() {
  // Full-scale values need the original models and datasets. What is
  // checked instead: the same end-to-end pipeline emits tables with the
  // expected column layout from an arbitrary endpoint.
  const auto root = testing::scratch("acceptance-schemas");
  testing::MockServer server(testing::kFixtures / "mock" / "recording.json");
  testing::spit(root / "endpoint.json", server.endpoint_json().dump(2));
  pl::CollectOptions co;
  co.dataset = testing::kFixtures / "mock" / "dataset.jsonl";
  co.endpoint_config = root / "endpoint.json";
  co.out_dir = root / "run";
  pl::collect(co);
  pl::MetricsOptions mo;
  mo.traces = root / "run";
  mo.out_dir = root / "metrics";
  mo.bootstrap_resamples = 200;
  pl::metrics(mo);
  pl::FrontierOptions fo;
  fo.traces = testing::kFixtures / "mcq50";
  fo.out_dir = root / "frontier";
  pl::frontier(fo);
  fo.traces = testing::kFixtures / "search12";
  pl::frontier(fo);  // overwrites with the search-task table

  const std::string summary = header(root / "metrics" / "summary.tsv");
  const bool summary_columns = summary.find("no_switch_raw_pct\tno_switch_denoised_pct\tswitches_raw\tswitches_denoised\ttafs") !=
                          std::string::npos &&
                      summary.find("t_after_raw\tt_after_raw_pct\tt_after_denoised\tt_after_denoised_pct") !=
                          std::string::npos;
  const std::string search = header(root / "frontier" / "frontier_random.tsv");
  const bool search_columns = search.rfind("cosine_similarity\ttokens_saved\ttoken_pct", 0) == 0;
  const auto mcq = frontier_table(std::vector<FrontierRow>{}, TaskKind::MCQ);
  const bool mcq_columns = mcq.rfind("accuracy_drop\ttokens_saved\ttoken_pct", 0) == 0;
  report(summary_columns && search_columns && mcq_columns, "full-scale numbers",
         "not reproducible without the original models and datasets (not attempted); mock-endpoint run emits "
         "summary columns [" + summary + "] and frontier columns [" + search + "]");
}

}  // namespace

int main() {
  try {
    const auto corpus = random_corpus(10000, 20240601);
    metric_oracle(corpus);
    denoising(corpus);
    probe_correctness();
    frontier_properties();
    determinism();
    report_schemas();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance harness: %s\n", e.what());
    return 2;
  }
  return g_failed == 0 ? 0 : 1;
}

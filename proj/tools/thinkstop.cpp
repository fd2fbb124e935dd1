// Command-line front end over the thinkstop C API.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thinkstop/thinkstop.h"

namespace {

bool g_quiet = false;

void log_line(const char* line, void*) {
  if (!g_quiet) std::fprintf(stderr, "%s\n", line);
}

int exit_code(ts_status s) {
  switch (s) {
    case TS_OK: return 0;
    case TS_ERR_CONFIG: return 2;
    case TS_ERR_DATA: return 3;
    case TS_ERR_ENDPOINT: return 4;
    default: return 1;
  }
}

int finish(ts_status s, const char* command) {
  if (s != TS_OK) std::fprintf(stderr, "thinkstop %s: %s\n", command, ts_last_error());
  return exit_code(s);
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// "all" -> -1, "default" -> 0, otherwise a positive count.
std::int64_t parse_sample(const std::string& s) {
  if (s == "all") return -1;
  if (s == "default") return 0;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v <= 0) throw CLI::ValidationError("--sample", "expects all, default or a positive count");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Answer-trajectory analysis and early stopping for reasoning traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ts_version()));
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress lines");
  app.fallthrough();

  std::function<int()> run;

  // collect
  ts_collect_options co{};
  std::string c_dataset, c_config, c_out, c_sample = "all";
  auto* collect = app.add_subcommand("collect", "Sample traces and build answer trajectories");
  collect->add_option("--dataset", c_dataset, "Dataset rows (JSONL)")->required();
  collect->add_option("--endpoint-config", c_config, "Endpoint config (JSON)")->required();
  collect->add_option("--out", c_out, "Run directory")->required();
  collect->add_option("--max-inflight", co.max_inflight, "Concurrent examples (default: config value)");
  collect->add_option("--seed", co.seed, "Seed for sampling and generation");
  collect->add_option("--sample", c_sample, "Rows per task: all, default or a count");
  collect->add_flag("--keep-truncated", co.keep_truncated, "Keep traces that hit the token budget (flagged)");
  collect->callback([&] {
    run = [&] {
      co.dataset = c_dataset.c_str();
      co.endpoint_config = c_config.c_str();
      co.out_dir = c_out.c_str();
      co.sample = parse_sample(c_sample);
      ts_collect_report rep{};
      const ts_status s = ts_collect(&co, &rep, log_line, nullptr);
      if (s == TS_OK && !g_quiet) {
        std::fprintf(stderr, "collected %zu, skipped %zu, failed %zu\n", rep.collected, rep.skipped, rep.failed);
      }
      return finish(s, "collect");
    };
  });

  // metrics
  ts_metrics_options mo{};
  mo.k = 3;
  mo.gamma = 0.9;
  mo.bootstrap_resamples = 10000;
  mo.confidence = 0.95;
  std::string m_traces, m_out;
  auto* metrics = app.add_subcommand("metrics", "Trajectory metrics and summary table");
  metrics->add_option("--traces", m_traces, "Run directory or trajectory file")->required();
  metrics->add_option("--k", mo.k, "Hold-for-k window")->check(CLI::PositiveNumber);
  metrics->add_option("--flip-k", mo.flip_k, "Longest transient flip counted (default: k)");
  metrics->add_option("--gamma", mo.gamma, "Query equivalence threshold");
  metrics->add_option("--out", m_out, "Output directory")->required();
  metrics->add_flag("--include-truncated", mo.include_truncated, "Include traces flagged truncated");
  metrics->add_option("--bootstrap", mo.bootstrap_resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
  metrics->add_option("--confidence", mo.confidence, "Confidence level of the intervals");
  metrics->add_option("--seed", mo.seed, "Bootstrap seed");
  metrics->callback([&] {
    run = [&] {
      mo.traces = m_traces.c_str();
      mo.out_dir = m_out.c_str();
      return finish(ts_metrics_run(&mo, log_line, nullptr), "metrics");
    };
  });

  // probe-train
  ts_probe_train_options pto{};
  std::vector<std::string> pt_traces, pt_dumps;
  std::string pt_config, pt_out;
  auto* ptrain = app.add_subcommand("probe-train", "Train the linear stopping probe");
  ptrain->add_option("--traces", pt_traces, "Run directories or trajectory files")->required();
  ptrain->add_option("--dumps", pt_dumps, "Dump directory, or one per --traces input")->required();
  ptrain->add_option("--split-seed", pto.split_seed, "Seed of the train/validation/test split");
  ptrain->add_option("--config", pt_config, "Probe config (JSON)");
  ptrain->add_option("--out", pt_out, "Output directory")->required();
  ptrain->add_flag("--union", pto.union_of_tasks, "Train one generic probe on the union of the inputs");
  ptrain->callback([&] {
    run = [&] {
      const auto t = c_strings(pt_traces);
      const auto d = c_strings(pt_dumps);
      pto.traces = t.data();
      pto.n_traces = t.size();
      pto.dumps = d.data();
      pto.n_dumps = d.size();
      pto.config = opt(pt_config);
      pto.out_dir = pt_out.c_str();
      return finish(ts_probe_train(&pto, log_line, nullptr), "probe-train");
    };
  });

  // probe-eval
  std::vector<std::string> pe_traces, pe_dumps;
  std::string pe_probe, pe_out;
  auto* peval = app.add_subcommand("probe-eval", "Report probe AP per split and per layer");
  peval->add_option("--probe", pe_probe, "Probe file")->required();
  peval->add_option("--traces", pe_traces, "Run directories or trajectory files")->required();
  peval->add_option("--dumps", pe_dumps, "Dump directory, or one per --traces input")->required();
  peval->add_option("--out", pe_out, "Report file");
  peval->callback([&] {
    run = [&] {
      const auto t = c_strings(pe_traces);
      const auto d = c_strings(pe_dumps);
      ts_probe_eval_options o{};
      o.probe = pe_probe.c_str();
      o.traces = t.data();
      o.n_traces = t.size();
      o.dumps = d.data();
      o.n_dumps = d.size();
      o.out = opt(pe_out);
      return finish(ts_probe_eval(&o, log_line, nullptr), "probe-eval");
    };
  });

  // frontier
  ts_frontier_options fo{};
  fo.gamma = 0.9;
  std::string f_traces, f_gate = "random", f_probe, f_dumps, f_tau = "quantile", f_out, f_split, f_subset = "test";
  auto* frontier = app.add_subcommand("frontier", "Tokens-saved vs. quality frontier for a gate");
  frontier->add_option("--traces", f_traces, "Run directory or trajectory file")->required();
  frontier->add_option("--gate", f_gate, "Gate")->check(CLI::IsMember({"random", "probe", "oracle"}));
  frontier->add_option("--probe", f_probe, "Probe file (probe gate)");
  frontier->add_option("--dumps", f_dumps, "Dump directory (probe gate)");
  frontier->add_option("--tau-grid", f_tau, "quantile, quantile:N or comma-separated thresholds");
  frontier->add_option("--out", f_out, "Output directory")->required();
  frontier->add_option("--seed", fo.seed, "Random gate seed");
  frontier->add_option("--gamma", fo.gamma, "Query equivalence threshold");
  frontier->add_option("--split", f_split, "Split file from probe-train");
  frontier->add_option("--subset", f_subset, "Split subset to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  frontier->add_flag("--include-truncated", fo.include_truncated, "Include traces flagged truncated");
  frontier->callback([&] {
    run = [&] {
      fo.traces = f_traces.c_str();
      fo.gate = f_gate.c_str();
      fo.probe = opt(f_probe);
      fo.dumps = opt(f_dumps);
      fo.tau_grid = f_tau.c_str();
      fo.out_dir = f_out.c_str();
      fo.split = opt(f_split);
      fo.subset = f_subset.c_str();
      return finish(ts_frontier(&fo, log_line, nullptr), "frontier");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    return run();
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "thinkstop: %s\n", e.what());
    return 2;
  }
}

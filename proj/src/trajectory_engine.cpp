#include "trajectory_engine.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "errors.hpp"
#include "rng.hpp"

namespace thinkstop {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool contains(const std::optional<std::vector<std::string>>& list, const std::string& v) {
  return list && std::find(list->begin(), list->end(), v) != list->end();
}

std::vector<std::string> stops_for(StopRule rule) {
  switch (rule) {
    case StopRule::FirstToken:
      return {};
    case StopRule::UntilClosingQuote:
      return {"\""};
    case StopRule::UntilToolCallClose:
      return {"\"", std::string(kToolCallClose)};
  }
  return {};
}

GenerationParams seeded(const GenerationParams& base, const EngineConfig& cfg, std::string_view trace_id,
                        std::size_t step) {
  GenerationParams p = base;
  p.seed = rng::derive(cfg.seed, std::string("answer/") + std::string(trace_id), step);
  return p;
}

// Generated-text answers (tools and queries) at the end of `prompt`.
AnswerLabel generated_answer(InferenceBackend& backend, TaskKind task, const std::string& prompt,
                             const GenerationParams& params,
                             const std::optional<std::vector<std::string>>& tools) {
  GenerationParams p = params;
  p.stop_sequences = stops_for(answer_prefix(task).stop_rule);
  const CompletionResult res = backend.complete(prompt, p);
  if (task == TaskKind::ToolSelection) {
    Tool tool{trim(res.text), true};
    tool.valid = !tools || contains(tools, tool.name);
    return tool;
  }
  Query q{res.text, backend.embed(res.text)};
  return q;
}

}  // namespace

EngineConfig::EngineConfig() {
  reasoning.stop_sequences = {std::string(kThinkClose)};
  answer.max_tokens = 128;
}

const std::vector<std::string>& default_options() {
  static const std::vector<std::string> kOptions{"A", "B", "C", "D"};
  return kOptions;
}

TraceRecord collect_trace(InferenceBackend& backend, const DatasetRow& row, const EngineConfig& cfg) {
  TraceRecord trace;
  trace.id = row.id;
  trace.task = row.task;
  trace.context = row.context;
  trace.gold = row.gold;
  trace.options = row.options;
  trace.tools = row.tools;
  if (trace.task == TaskKind::MCQ && !trace.options) trace.options = default_options();

  try {
    GenerationParams rp = cfg.reasoning;
    if (std::find(rp.stop_sequences.begin(), rp.stop_sequences.end(), kThinkClose) == rp.stop_sequences.end()) {
      rp.stop_sequences.emplace_back(kThinkClose);
    }
    rp.seed = rng::derive(cfg.seed, "reasoning/" + row.id);
    const CompletionResult res = backend.complete(row.context + std::string(kThinkOpen), rp);
    if (res.truncated) {
      if (!cfg.keep_truncated) {
        throw TruncatedTraceError("reasoning did not close within " + std::to_string(rp.max_tokens) + " tokens");
      }
      trace.flags.emplace_back(kFlagTruncated);
    }

    trace.reasoning_text = res.text;
    trace.token_offsets.reserve(res.tokens.size());
    for (const auto& t : res.tokens) trace.token_offsets.push_back(t.offset);
    trace.step_spans =
        align_to_tokens(segment(trace.reasoning_text, cfg.segmentation), trace.token_offsets,
                        trace.reasoning_text.size());
    trace.validate();

    // Unforced final answer: sampled after the full reasoning with the task's
    // own stop rule.
    const AnswerPrefix& prefix = answer_prefix(trace.task);
    const std::string prompt =
        render_prompt(trace.context, trace.reasoning_text, trace.step_spans, trace.step_count(), prefix);
    GenerationParams ap = seeded(cfg.answer, cfg, trace.id, std::numeric_limits<std::uint32_t>::max());
    switch (trace.task) {
      case TaskKind::MCQ: {
        ap.stop_sequences = {"\""};
        const std::string symbol = trim(backend.complete(prompt, ap).text);
        if (!contains(trace.options, symbol)) {
          throw MalformedAnswerError("final answer '" + symbol + "' is not a declared option");
        }
        trace.final_answer = Choice{symbol};
        break;
      }
      case TaskKind::Numeric: {
        ap.stop_sequences = {"}"};
        const CompletionResult ans = backend.complete(prompt, ap);
        if (ans.tokens.empty()) throw MalformedAnswerError("empty numeric answer");
        trace.final_answer = Token{ans.tokens.front().text};
        break;
      }
      case TaskKind::ToolSelection:
      case TaskKind::SearchQuery:
        trace.final_answer = generated_answer(backend, trace.task, prompt, ap, trace.tools);
        break;
    }
    if (const auto* tool = std::get_if<Tool>(&*trace.final_answer); tool && !tool->valid) {
      trace.flags.emplace_back(kFlagInvalidTool);
    }
  } catch (...) {
    rethrow_with_context("trace '" + row.id + "': ");
  }
  return trace;
}

AnswerLabel forced_answer(InferenceBackend& backend, const TraceRecord& trace, std::size_t step,
                          const EngineConfig& cfg) {
  const AnswerPrefix& prefix = answer_prefix(trace.task);
  const std::string prompt =
      render_prompt(trace.context, trace.reasoning_text, trace.step_spans, step, prefix);
  const GenerationParams params = seeded(cfg.answer, cfg, trace.id, step);

  switch (trace.task) {
    case TaskKind::MCQ: {
      const auto& options = trace.options ? *trace.options : default_options();
      const auto lps = candidate_logprobs(backend, prompt, options, params);
      // std::map iterates in ascending symbol order, so a strict comparison
      // keeps the smallest symbol on ties.
      auto best = lps.begin();
      for (auto it = lps.begin(); it != lps.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      return Choice{best->first};
    }
    case TaskKind::Numeric: {
      GenerationParams p = params;
      p.max_tokens = 1;
      p.stop_sequences.clear();
      const CompletionResult res = backend.complete(prompt, p);
      if (!res.top_alternatives.empty() && !res.top_alternatives.front().empty()) {
        return Token{res.top_alternatives.front().front().first};
      }
      if (res.tokens.empty()) throw MalformedAnswerError("no token generated after the numeric prefix");
      return Token{res.tokens.front().text};
    }
    case TaskKind::ToolSelection:
    case TaskKind::SearchQuery:
      return generated_answer(backend, trace.task, prompt, params, trace.tools);
  }
  throw ContractError("unknown task kind");
}

AnswerTrajectory build_trajectory(InferenceBackend& backend, const TraceRecord& trace,
                                  const EngineConfig& cfg) {
  AnswerTrajectory traj;
  traj.trace_id = trace.id;
  try {
    traj.cum_tokens = cum_tokens_for_spans(trace.step_spans, trace.token_offsets);
  } catch (...) {
    rethrow_with_context("trace '" + trace.id + "': ");
  }

  const std::size_t count = trace.step_count() + 1;
  std::vector<std::optional<AnswerLabel>> slots(count);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t failed_step = count;

  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i] = forced_answer(backend, trace, i, cfg);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < failed_step) {
          failed_step = i;
          first_error = std::current_exception();
        }
      }
    }
  };

  const auto threads = static_cast<std::size_t>(std::max(1, cfg.step_concurrency));
  if (threads == 1 || count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  }

  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (...) {
      rethrow_with_context("trace '" + trace.id + "' step " + std::to_string(failed_step) + ": ");
    }
  }
  traj.labels.reserve(count);
  for (auto& s : slots) traj.labels.push_back(std::move(*s));
  return traj;
}

}  // namespace thinkstop

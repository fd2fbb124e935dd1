#pragma once

// Value types shared by every module. Nothing here performs I/O.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace thinkstop {

enum class TaskKind { MCQ, Numeric, SearchQuery, ToolSelection };

std::string_view to_string(TaskKind task);
// Accepts "mcq", "numeric", "search_query", "tool_selection".
TaskKind parse_task(std::string_view name);

struct Choice {
  std::string label;
  friend bool operator==(const Choice&, const Choice&) = default;
};

// Exact token string as returned by the endpoint; never parsed as a number.
struct Token {
  std::string text;
  friend bool operator==(const Token&, const Token&) = default;
};

struct Tool {
  std::string name;
  // False when the name is not among the example's declared tools.
  bool valid = true;
  friend bool operator==(const Tool&, const Tool&) = default;
};

struct Query {
  std::string text;
  std::vector<double> embedding;  // unit L2 norm
  friend bool operator==(const Query&, const Query&) = default;
};

using AnswerLabel = std::variant<Choice, Token, Tool, Query>;

// Label kind a task produces.
std::size_t label_index_for(TaskKind task);

// Text content of any label (option symbol, token, tool name or query).
const std::string& label_text(const AnswerLabel& label);

struct EquivalenceConfig {
  double gamma = 0.9;

  void validate() const;
};

// Choice/Token/Tool compare by exact string; Query compares by cosine >= gamma.
// Not transitive for Query. Throws ContractError on variant or dimension
// mismatch.
bool equivalent(const AnswerLabel& a, const AnswerLabel& b, const EquivalenceConfig& cfg);

double dot(const std::vector<double>& a, const std::vector<double>& b);

// Half-open byte range into the reasoning text.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

struct TraceRecord {
  std::string id;
  TaskKind task = TaskKind::MCQ;
  std::string context;         // rendered prompt up to, not including, <think>
  std::string reasoning_text;  // between <think> and </think>
  std::vector<ByteSpan> step_spans;
  std::vector<std::size_t> token_offsets;  // one per reasoning token
  std::optional<AnswerLabel> final_answer;  // absent only for flagged records
  std::optional<AnswerLabel> gold;
  std::optional<std::vector<std::string>> options;
  std::optional<std::vector<std::string>> tools;
  std::vector<std::string> flags;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();  // unknown keys

  std::size_t step_count() const { return step_spans.size(); }
  bool has_flag(std::string_view flag) const;

  // Checks the span partition, token offsets and span/token alignment.
  // Throws DataError.
  void validate() const;
};

struct AnswerTrajectory {
  std::string trace_id;
  std::vector<AnswerLabel> labels;       // A_0..A_n
  std::vector<std::int64_t> cum_tokens;  // T_0..T_n

  std::size_t steps() const { return labels.empty() ? 0 : labels.size() - 1; }
  std::int64_t total_tokens() const { return cum_tokens.empty() ? 0 : cum_tokens.back(); }

  // Throws DataError when lengths differ or T is not a valid cumulative count.
  void validate() const;
};

// What the trajectory file stores: the trajectory plus what analysis needs
// without going back to the trace file.
struct TrajectoryRecord {
  AnswerTrajectory trajectory;
  TaskKind task = TaskKind::MCQ;
  std::optional<AnswerLabel> final_answer;  // unforced answer after full reasoning
  std::optional<AnswerLabel> gold;
  std::vector<std::string> flags;

  bool has_flag(std::string_view flag) const;
};

inline constexpr std::string_view kFlagTruncated = "truncated";
inline constexpr std::string_view kFlagInvalidTool = "invalid_tool";

}  // namespace thinkstop

#include "trace_model.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace thinkstop {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::MCQ:
      return "mcq";
    case TaskKind::Numeric:
      return "numeric";
    case TaskKind::SearchQuery:
      return "search_query";
    case TaskKind::ToolSelection:
      return "tool_selection";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  if (name == "mcq") return TaskKind::MCQ;
  if (name == "numeric") return TaskKind::Numeric;
  if (name == "search_query") return TaskKind::SearchQuery;
  if (name == "tool_selection") return TaskKind::ToolSelection;
  throw FormatError("unknown task kind '" + std::string(name) + "'");
}

std::size_t label_index_for(TaskKind task) {
  switch (task) {
    case TaskKind::MCQ:
      return 0;
    case TaskKind::Numeric:
      return 1;
    case TaskKind::ToolSelection:
      return 2;
    case TaskKind::SearchQuery:
      return 3;
  }
  return 0;
}

const std::string& label_text(const AnswerLabel& label) {
  return std::visit(
      [](const auto& v) -> const std::string& {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Choice>) return v.label;
        if constexpr (std::is_same_v<T, Token>) return v.text;
        if constexpr (std::is_same_v<T, Tool>) return v.name;
        if constexpr (std::is_same_v<T, Query>) return v.text;
      },
      label);
}

void EquivalenceConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ContractError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool equivalent(const AnswerLabel& a, const AnswerLabel& b, const EquivalenceConfig& cfg) {
  if (a.index() != b.index()) {
    throw ContractError("cannot compare answer labels of different kinds");
  }
  if (const auto* qa = std::get_if<Query>(&a)) {
    return dot(qa->embedding, std::get<Query>(b).embedding) >= cfg.gamma;
  }
  return label_text(a) == label_text(b);
}

bool TraceRecord::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

bool TrajectoryRecord::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

void TraceRecord::validate() const {
  const std::string where = "trace '" + id + "': ";
  const std::size_t len = reasoning_text.size();

  std::size_t pos = 0;
  for (std::size_t j = 0; j < step_spans.size(); ++j) {
    const auto& s = step_spans[j];
    if (s.begin != pos || s.end < s.begin || s.end > len) {
      throw DataError(where + "step span " + std::to_string(j) + " does not continue the partition");
    }
    pos = s.end;
  }
  if (pos != len) {
    throw DataError(where + "step spans cover " + std::to_string(pos) + " of " +
                    std::to_string(len) + " bytes");
  }

  if (!token_offsets.empty() && token_offsets.front() != 0) {
    throw DataError(where + "first token offset must be 0");
  }
  for (std::size_t t = 0; t < token_offsets.size(); ++t) {
    if (token_offsets[t] >= len ||
        (t > 0 && token_offsets[t] <= token_offsets[t - 1])) {
      throw DataError(where + "token offsets must be strictly increasing and inside the text (token " +
                      std::to_string(t) + ")");
    }
  }
  if (len == 0 && !token_offsets.empty()) {
    throw DataError(where + "token offsets given for empty reasoning");
  }
  if (len > 0 && token_offsets.empty()) {
    throw DataError(where + "non-empty reasoning without token offsets");
  }

  for (std::size_t j = 0; j < step_spans.size(); ++j) {
    const std::size_t end = step_spans[j].end;
    if (end == len) continue;
    if (!std::binary_search(token_offsets.begin(), token_offsets.end(), end)) {
      throw AlignmentError(where + "step " + std::to_string(j) + " ends inside a token");
    }
  }
}

void AnswerTrajectory::validate() const {
  const std::string where = "trajectory '" + trace_id + "': ";
  if (labels.empty()) throw DataError(where + "no labels");
  if (labels.size() != cum_tokens.size()) {
    throw DataError(where + "labels and cum_tokens differ in length");
  }
  if (cum_tokens.front() != 0) throw DataError(where + "cum_tokens must start at 0");
  for (std::size_t i = 1; i < cum_tokens.size(); ++i) {
    if (cum_tokens[i] < cum_tokens[i - 1]) {
      throw DataError(where + "cum_tokens decreases at step " + std::to_string(i));
    }
  }
  const auto kind = labels.front().index();
  for (const auto& l : labels) {
    if (l.index() != kind) throw DataError(where + "mixed label kinds");
  }
}

}  // namespace thinkstop

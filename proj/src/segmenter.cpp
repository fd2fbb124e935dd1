#include "segmenter.hpp"

#include <algorithm>

#include "errors.hpp"

namespace thinkstop {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t skip_space(std::string_view text, std::size_t i) {
  while (i < text.size() && is_space(text[i])) ++i;
  return i;
}

// True when a newline at `i` is followed, after horizontal whitespace, by
// another newline.
bool blank_line_at(std::string_view text, std::size_t i) {
  if (text[i] != '\n') return false;
  std::size_t j = i + 1;
  while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
  return j < text.size() && text[j] == '\n';
}

}  // namespace

void SegmentationRules::validate() const {
  if (terminator_set.empty()) throw ConfigError("segmentation terminator set is empty");
}

std::vector<ByteSpan> segment(std::string_view text, const SegmentationRules& rules) {
  rules.validate();
  std::vector<ByteSpan> spans;
  std::size_t start = 0;
  bool has_content = false;

  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    std::size_t cut = 0;
    if (rules.terminator_set.find(c) != std::string::npos &&
        (i + 1 == text.size() || is_space(text[i + 1]))) {
      cut = skip_space(text, i + 1);
    } else if (rules.break_on_blank_line && blank_line_at(text, i)) {
      cut = skip_space(text, i);
    }

    if (!is_space(c)) has_content = true;
    if (cut != 0 && has_content) {
      spans.push_back({start, cut});
      start = cut;
      has_content = false;
      i = cut;
    } else {
      ++i;
    }
  }
  if (start < text.size()) {
    if (!has_content && !spans.empty()) {
      spans.back().end = text.size();
    } else {
      spans.push_back({start, text.size()});
    }
  }
  return spans;
}

std::vector<ByteSpan> align_to_tokens(std::span<const ByteSpan> spans,
                                      std::span<const std::size_t> token_offsets,
                                      std::size_t text_length) {
  std::vector<ByteSpan> out;
  std::size_t start = 0;
  for (const auto& s : spans) {
    std::size_t end = s.end;
    if (end < text_length) {
      auto it = std::lower_bound(token_offsets.begin(), token_offsets.end(), end);
      end = it == token_offsets.end() ? text_length : *it;
    }
    if (end > start) {
      out.push_back({start, end});
      start = end;
    }
  }
  if (start < text_length) {
    if (out.empty()) {
      out.push_back({start, text_length});
    } else {
      out.back().end = text_length;
    }
  }
  return out;
}

std::vector<std::int64_t> cum_tokens_for_spans(std::span<const ByteSpan> spans,
                                               std::span<const std::size_t> token_offsets) {
  std::vector<std::int64_t> cum;
  cum.reserve(spans.size() + 1);
  cum.push_back(0);
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const std::size_t end = spans[j].end;
    auto it = std::lower_bound(token_offsets.begin(), token_offsets.end(), end);
    const bool last = j + 1 == spans.size();
    if (!last && (it == token_offsets.end() || *it != end)) {
      const auto token = static_cast<std::size_t>(it - token_offsets.begin());
      throw AlignmentError("step " + std::to_string(j) + " ends at byte " + std::to_string(end) +
                           " inside token " + std::to_string(token == 0 ? 0 : token - 1));
    }
    cum.push_back(static_cast<std::int64_t>(it - token_offsets.begin()));
  }
  if (!spans.empty() && static_cast<std::size_t>(cum.back()) != token_offsets.size()) {
    throw AlignmentError("tokens start after the last step ends (token " +
                         std::to_string(cum.back()) + ")");
  }
  return cum;
}

}  // namespace thinkstop

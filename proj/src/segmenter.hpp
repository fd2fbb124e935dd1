#pragma once

// Sentence-level step segmentation over raw bytes. Terminators and
// whitespace are ASCII, and ASCII bytes never occur inside a multi-byte UTF-8
// sequence, so byte-level scanning never cuts a code point.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace_model.hpp"

namespace thinkstop {

struct SegmentationRules {
  std::string terminator_set = ".!?";
  bool break_on_blank_line = true;

  void validate() const;
};

// Contiguous spans covering `text` exactly. A span ends after a terminator
// plus the whitespace run that follows it, after a blank line, or at end of
// text. Whitespace-only leading fragments are merged into the next step.
std::vector<ByteSpan> segment(std::string_view text, const SegmentationRules& rules = {});

// Moves every interior boundary forward to the next token boundary so no
// token straddles two steps. Spans that collapse to nothing are dropped.
std::vector<ByteSpan> align_to_tokens(std::span<const ByteSpan> spans,
                                      std::span<const std::size_t> token_offsets,
                                      std::size_t text_length);

// T_0 = 0 and T_i = number of tokens starting before spans[i-1].end.
// Throws AlignmentError if a span end falls inside a token.
std::vector<std::int64_t> cum_tokens_for_spans(std::span<const ByteSpan> spans,
                                               std::span<const std::size_t> token_offsets);

}  // namespace thinkstop

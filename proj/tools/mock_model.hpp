#pragma once

// Deterministic stand-in for a completion + embedding endpoint, driven by a
// recording file. Independent of the thinkstop core on purpose.
//
// Recording (JSON):
// {
//   "examples": [{
//     "context":   "<prompt before <think>>",
//     "reasoning": ["tok", "tok", ...],      // reasoning tokens, without </think>
//     "truncated": false,                    // true: never emits </think>
//     "answers":   [{"at": 0, "top": {"A": -0.2, "B": -1.9}},
//                   {"at": 57, "text": "web_search\"}"}],
//     "final":     {"text": "B"}             // optional, see below
//   }],
//   "embeddings": {"query text": [0.1, ...]} // optional
// }
//
// A request whose prompt is exactly context + "<think>" gets the reasoning.
// Any other prompt must be context + "<think>" + R + "</think>" + prefix,
// where R is a prefix of the joined reasoning; its byte length selects the
// answer entry with the largest "at" not above it. "top" entries answer with
// the best key and report the map as top_logprobs; "text" entries answer
// with the text. "final", when present, replaces the entry for the full
// reasoning on requests with max_tokens > 1. Texts without a recorded
// embedding get a hashed bag-of-words vector of the recorded dimension.

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace mock {

struct Reply {
  int status = 200;
  nlohmann::json body;
};

class MockModel {
 public:
  explicit MockModel(nlohmann::json recording);

  Reply complete(const nlohmann::json& request);
  Reply embed(const nlohmann::json& request);

  // The first `n` requests get HTTP 503.
  void fail_first(int n) { fail_remaining_ = n; }

  std::uint64_t completion_requests() const { return completions_; }
  std::uint64_t embedding_requests() const { return embeddings_; }

  static std::vector<double> hashed_embedding(const std::string& text, std::size_t dim = 16);

 private:
  bool should_fail();

  nlohmann::json recording_;
  std::atomic<int> fail_remaining_{0};
  std::atomic<std::uint64_t> completions_{0};
  std::atomic<std::uint64_t> embeddings_{0};
};

// Routes POST /v1/completions and /v1/embeddings to `model`.
void mount(httplib::Server& server, MockModel& model);

}  // namespace mock

#pragma once

// Raw text-completion and embedding transport, forced-completion prompt
// assembly and the per-task answer prefixes.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trace_model.hpp"

namespace thinkstop {

struct GenerationParams {
  double temperature = 0.6;
  int max_tokens = 8192;
  std::vector<std::string> stop_sequences;
  int top_logprobs = 20;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct CompletionToken {
  std::string text;
  std::size_t offset = 0;  // byte offset into CompletionResult::text
  double logprob = 0.0;
};

struct CompletionResult {
  std::string text;
  std::vector<CompletionToken> tokens;
  // Per position, sorted by descending logprob then token text.
  std::vector<std::vector<std::pair<std::string, double>>> top_alternatives;
  bool truncated = false;  // stopped by max_tokens
};

// Anything that can sample continuations of a raw prompt and embed text.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual CompletionResult complete(const std::string& prompt, const GenerationParams& params) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

struct EndpointConfig {
  std::string completion_url;  // e.g. http://127.0.0.1:8000/v1/completions
  std::string embedding_url;   // e.g. http://127.0.0.1:8001/v1/embeddings
  std::string model;           // sent as "model" when non-empty
  std::string embedding_model;
  std::string auth_env = "THINKSTOP_API_KEY";  // bearer token variable
  double timeout_seconds = 120.0;
  int max_inflight = 4;
  int retries = 3;
  double backoff_initial_seconds = 0.5;
  double backoff_max_seconds = 8.0;
  std::size_t embedding_dim = 0;  // 0: fixed by the first response
  bool send_seed = true;

  void validate() const;
};

// Reads a JSON config. Keys mirror the struct fields; THINKSTOP_COMPLETION_URL
// and THINKSTOP_EMBEDDING_URL override the file.
EndpointConfig load_endpoint_config(const std::string& path);
EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

// OpenAI-style /v1/completions client with per-token logprobs. Safe to call
// from several threads; at most max_inflight requests run at once.
class InferenceClient final : public InferenceBackend {
 public:
  explicit InferenceClient(EndpointConfig config);

  CompletionResult complete(const std::string& prompt, const GenerationParams& params) override;
  std::vector<double> embed(const std::string& text) override;

  const EndpointConfig& config() const { return config_; }

 private:
  nlohmann::json post_with_retries(const std::string& url, const nlohmann::json& body);

  EndpointConfig config_;
  std::string auth_token_;
  std::unique_ptr<std::counting_semaphore<>> inflight_;
  std::atomic<std::size_t> embedding_dim_;
};

// Parses one completion response body. Exposed for tests.
CompletionResult parse_completion_response(const nlohmann::json& body, const GenerationParams& params);

enum class StopRule { FirstToken, UntilClosingQuote, UntilToolCallClose };

struct AnswerPrefix {
  TaskKind task;
  std::string_view text;
  StopRule stop_rule;
};

const AnswerPrefix& answer_prefix(TaskKind task);

// context + "<think>" + steps 1..i + "</think>" + prefix. Throws
// ContractError when step > spans.size().
std::string render_prompt(std::string_view context, std::string_view reasoning_text,
                          std::span<const ByteSpan> step_spans, std::size_t step,
                          const AnswerPrefix& prefix);

// Log-probabilities of the candidate tokens at the first generated position.
// Candidates absent from the top alternatives map to -infinity; all absent
// throws AmbiguityError.
std::map<std::string, double> candidate_logprobs(InferenceBackend& backend, const std::string& prompt,
                                                 std::span<const std::string> candidates,
                                                 const GenerationParams& params);

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kToolCallClose = "</tool_call>";

}  // namespace thinkstop

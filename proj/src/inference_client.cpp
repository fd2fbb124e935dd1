#include "inference_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <thread>

#include <httplib.h>

#include "errors.hpp"

namespace thinkstop {

namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// Removes the first occurrence of any stop sequence and everything after it.
// Some servers echo the matched stop string, others do not.
void apply_stop(std::string& text, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut != std::string::npos) text.resize(cut);
}

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_tokens < 1) throw ConfigError("max_tokens must be positive");
  if (top_logprobs < 1) throw ConfigError("top_logprobs must be >= 1");
}

void EndpointConfig::validate() const {
  if (completion_url.empty()) throw ConfigError("completion_url is not configured");
  if (max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
  if (retries < 0) throw ConfigError("retries must be >= 0");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout_seconds must be positive");
}

EndpointConfig endpoint_config_from_json(const json& j) {
  EndpointConfig c;
  try {
    c.completion_url = j.value("completion_url", c.completion_url);
    c.embedding_url = j.value("embedding_url", c.embedding_url);
    c.model = j.value("model", c.model);
    c.embedding_model = j.value("embedding_model", c.embedding_model);
    c.auth_env = j.value("auth_env", c.auth_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_inflight = j.value("max_inflight", c.max_inflight);
    c.retries = j.value("retries", c.retries);
    c.backoff_initial_seconds = j.value("backoff_initial_seconds", c.backoff_initial_seconds);
    c.backoff_max_seconds = j.value("backoff_max_seconds", c.backoff_max_seconds);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.send_seed = j.value("send_seed", c.send_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("endpoint config: ") + e.what());
  }
  if (const char* v = std::getenv("THINKSTOP_COMPLETION_URL"); v && *v) c.completion_url = v;
  if (const char* v = std::getenv("THINKSTOP_EMBEDDING_URL"); v && *v) c.embedding_url = v;
  return c;
}

EndpointConfig load_endpoint_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open endpoint config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("endpoint config " + path + ": " + e.what());
  }
  return endpoint_config_from_json(j);
}

InferenceClient::InferenceClient(EndpointConfig config)
    : config_(std::move(config)),
      inflight_(std::make_unique<std::counting_semaphore<>>(config_.max_inflight)),
      embedding_dim_(config_.embedding_dim) {
  config_.validate();
  if (const char* tok = std::getenv(config_.auth_env.c_str())) auth_token_ = tok;
}

json InferenceClient::post_with_retries(const std::string& url, const json& body) {
  const auto target = parse_url(url);
  const std::string payload = body.dump();
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);

  std::string last_error;
  const int attempts = config_.retries + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      const double delay = std::min(config_.backoff_max_seconds,
                                    config_.backoff_initial_seconds * std::pow(2.0, attempt - 2));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }

    httplib::Result res;
    {
      inflight_->acquire();
      httplib::Client cli(target.origin);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      if (!auth_token_.empty()) cli.set_bearer_token_auth(auth_token_);
      res = cli.Post(target.path, payload, "application/json");
      inflight_->release();
    }

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EndpointError(url + " answered HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 200),
                          false, attempt);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw EndpointError(url + " returned invalid JSON: " + e.what(), false, attempt);
    }
  }
  throw EndpointError(url + " failed after " + std::to_string(attempts) + " attempts (" + last_error + ")",
                      true, attempts);
}

CompletionResult parse_completion_response(const json& body, const GenerationParams& params) {
  CompletionResult out;
  try {
    const auto& choice = body.at("choices").at(0);
    out.text = choice.at("text").get<std::string>();
    const auto finish = choice.contains("finish_reason") && choice["finish_reason"].is_string()
                            ? choice["finish_reason"].get<std::string>()
                            : std::string();
    out.truncated = finish == "length";
    apply_stop(out.text, params.stop_sequences);

    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
      throw CapabilityError("completion endpoint returned no logprobs");
    }
    const auto& lp = choice["logprobs"];
    const auto& tokens = lp.at("tokens");
    const auto& token_lps = lp.at("token_logprobs");
    const json* tops = lp.contains("top_logprobs") ? &lp["top_logprobs"] : nullptr;
    if (tokens.size() != token_lps.size()) throw FormatError("tokens and token_logprobs differ in length");

    std::size_t offset = 0;
    for (std::size_t t = 0; t < tokens.size() && offset < out.text.size(); ++t) {
      CompletionToken tok;
      tok.text = tokens[t].get<std::string>();
      tok.offset = offset;
      tok.logprob = token_lps[t].is_null() ? 0.0 : token_lps[t].get<double>();
      if (tok.text.empty()) continue;
      if (offset + tok.text.size() > out.text.size()) tok.text.resize(out.text.size() - offset);
      if (out.text.compare(offset, tok.text.size(), tok.text) != 0) {
        throw FormatError("token texts do not reproduce the completion text at byte " +
                          std::to_string(offset));
      }
      offset += tok.text.size();

      std::vector<std::pair<std::string, double>> alts;
      if (tops && tops->is_array() && t < tops->size() && (*tops)[t].is_object()) {
        for (const auto& [k, v] : (*tops)[t].items()) alts.emplace_back(k, v.get<double>());
      }
      std::sort(alts.begin(), alts.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      out.tokens.push_back(std::move(tok));
      out.top_alternatives.push_back(std::move(alts));
    }
    if (offset != out.text.size()) {
      throw FormatError("token texts cover " + std::to_string(offset) + " of " +
                        std::to_string(out.text.size()) + " bytes");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed completion response: ") + e.what());
  }
  return out;
}

CompletionResult InferenceClient::complete(const std::string& prompt, const GenerationParams& params) {
  params.validate();
  json body = {{"prompt", prompt},
               {"max_tokens", params.max_tokens},
               {"temperature", params.temperature},
               {"logprobs", params.top_logprobs}};
  if (!config_.model.empty()) body["model"] = config_.model;
  if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;
  if (params.seed && config_.send_seed) body["seed"] = *params.seed;
  return parse_completion_response(post_with_retries(config_.completion_url, body), params);
}

std::vector<double> InferenceClient::embed(const std::string& text) {
  if (config_.embedding_url.empty()) throw ConfigError("embedding_url is not configured");
  json body = {{"input", text}};
  if (!config_.embedding_model.empty()) body["model"] = config_.embedding_model;
  const json res = post_with_retries(config_.embedding_url, body);

  std::vector<double> v;
  try {
    if (res.contains("embedding")) {
      v = res["embedding"].get<std::vector<double>>();
    } else {
      v = res.at("data").at(0).at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed embedding response: ") + e.what());
  }

  std::size_t expected = embedding_dim_.load();
  if (expected == 0) {
    embedding_dim_.compare_exchange_strong(expected, v.size());
    expected = embedding_dim_.load();
  }
  if (v.size() != expected) {
    throw FormatError("embedding dimension " + std::to_string(v.size()) + " does not match " +
                      std::to_string(expected));
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw FormatError("embedding has zero or non-finite norm");
  for (double& x : v) x /= norm;
  return v;
}

const AnswerPrefix& answer_prefix(TaskKind task) {
  static const AnswerPrefix kMcq{TaskKind::MCQ, R"({"answer": ")", StopRule::FirstToken};
  static const AnswerPrefix kNumeric{TaskKind::Numeric, R"(\boxed{)", StopRule::FirstToken};
  static const AnswerPrefix kTool{TaskKind::ToolSelection, R"(<tool_call>{"name": ")",
                                  StopRule::UntilClosingQuote};
  static const AnswerPrefix kSearch{TaskKind::SearchQuery,
                                    R"(<tool_call>{"name": "web_search", "arguments": {"query": ")",
                                    StopRule::UntilToolCallClose};
  switch (task) {
    case TaskKind::MCQ:
      return kMcq;
    case TaskKind::Numeric:
      return kNumeric;
    case TaskKind::ToolSelection:
      return kTool;
    case TaskKind::SearchQuery:
      return kSearch;
  }
  return kMcq;
}

std::string render_prompt(std::string_view context, std::string_view reasoning_text,
                          std::span<const ByteSpan> step_spans, std::size_t step,
                          const AnswerPrefix& prefix) {
  if (step > step_spans.size()) {
    throw ContractError("step " + std::to_string(step) + " out of range 0.." +
                        std::to_string(step_spans.size()));
  }
  const std::size_t upto = step == 0 ? 0 : step_spans[step - 1].end;
  if (upto > reasoning_text.size()) throw ContractError("step span beyond reasoning text");

  std::string out;
  out.reserve(context.size() + upto + kThinkOpen.size() + kThinkClose.size() + prefix.text.size());
  out.append(context);
  out.append(kThinkOpen);
  out.append(reasoning_text.substr(0, upto));
  out.append(kThinkClose);
  out.append(prefix.text);
  return out;
}

std::map<std::string, double> candidate_logprobs(InferenceBackend& backend, const std::string& prompt,
                                                 std::span<const std::string> candidates,
                                                 const GenerationParams& params) {
  if (candidates.empty()) throw ContractError("no answer candidates given");
  GenerationParams p = params;
  p.max_tokens = 1;
  p.stop_sequences.clear();
  const CompletionResult res = backend.complete(prompt, p);

  std::map<std::string, double> found;
  if (!res.top_alternatives.empty()) {
    for (const auto& [tok, lp] : res.top_alternatives.front()) found.emplace(tok, lp);
  }
  if (!res.tokens.empty()) found.emplace(res.tokens.front().text, res.tokens.front().logprob);

  std::map<std::string, double> out;
  bool any = false;
  for (const auto& c : candidates) {
    auto it = found.find(c);
    if (it != found.end()) {
      out[c] = it->second;
      any = true;
    } else {
      out[c] = -std::numeric_limits<double>::infinity();
    }
  }
  if (!any) {
    throw AmbiguityError("none of the " + std::to_string(candidates.size()) +
                         " candidates appear among the top " + std::to_string(params.top_logprobs) +
                         " alternatives");
  }
  return out;
}

}  // namespace thinkstop

#include "mock_model.hpp"

#include <cmath>
#include <cstring>

#include <httplib.h>

namespace mock {

using nlohmann::json;

namespace {

constexpr const char* kThinkOpen = "<think>";
constexpr const char* kThinkClose = "</think>";

Reply error(int status, const std::string& message) { return {status, {{"error", {{"message", message}}}}}; }

// Cuts `tokens` at the first stop sequence found in their concatenation.
bool apply_stop(std::vector<std::string>& tokens, const std::vector<std::string>& stops) {
  std::string text;
  for (const auto& t : tokens) text += t;
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  std::vector<std::string> kept;
  std::size_t off = 0;
  for (const auto& t : tokens) {
    if (off >= cut) break;
    kept.push_back(off + t.size() <= cut ? t : t.substr(0, cut - off));
    off += t.size();
  }
  tokens = std::move(kept);
  return true;
}

json completion_body(const std::vector<std::string>& tokens, const std::string& finish, const json& tops) {
  std::string text;
  json lps = json::array();
  for (const auto& t : tokens) {
    text += t;
    lps.push_back(-0.05);
  }
  return {{"object", "text_completion"},
          {"choices",
           json::array({{{"index", 0},
                         {"text", text},
                         {"finish_reason", finish},
                         {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}, {"top_logprobs", tops}}}}})}};
}

// Splits generated answer text into small tokens: runs of letters/digits,
// or single other bytes.
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto word = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  };
  while (i < text.size()) {
    std::size_t j = i + 1;
    if (word(text[i])) {
      while (j < text.size() && word(text[j])) ++j;
    }
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

MockModel::MockModel(json recording) : recording_(std::move(recording)) {
  if (!recording_.contains("examples") || !recording_["examples"].is_array()) {
    throw std::runtime_error("recording has no examples array");
  }
}

bool MockModel::should_fail() {
  int n = fail_remaining_.load();
  while (n > 0) {
    if (fail_remaining_.compare_exchange_weak(n, n - 1)) return true;
  }
  return false;
}

Reply MockModel::complete(const json& req) {
  ++completions_;
  if (should_fail()) return error(503, "temporarily unavailable");
  if (!req.contains("prompt") || !req["prompt"].is_string()) return error(400, "missing prompt");
  const std::string prompt = req["prompt"];
  const int max_tokens = req.value("max_tokens", 16);
  std::vector<std::string> stops;
  if (req.contains("stop")) {
    if (req["stop"].is_string()) {
      stops.push_back(req["stop"]);
    } else {
      stops = req["stop"].get<std::vector<std::string>>();
    }
  }

  const json* ex = nullptr;
  std::size_t matched = 0;
  for (const auto& e : recording_["examples"]) {
    const std::string head = e.value("context", std::string()) + kThinkOpen;
    if (prompt.compare(0, head.size(), head) == 0 && head.size() >= matched) {
      ex = &e;
      matched = head.size();
    }
  }
  if (!ex) return error(404, "prompt matches no recorded example");

  const auto reasoning = ex->value("reasoning", std::vector<std::string>{});
  std::string joined;
  for (const auto& t : reasoning) joined += t;
  const std::string rest = prompt.substr(matched);

  if (rest.empty()) {
    std::vector<std::string> tokens = reasoning;
    const bool truncated = ex->value("truncated", false);
    if (!truncated) tokens.emplace_back(kThinkClose);
    std::string finish = truncated ? "length" : "stop";
    if (tokens.size() > static_cast<std::size_t>(max_tokens)) {
      tokens.resize(static_cast<std::size_t>(max_tokens));
      finish = "length";
    }
    if (apply_stop(tokens, stops)) finish = "stop";
    json tops = json::array();
    for (const auto& t : tokens) tops.push_back({{t, -0.05}});
    return {200, completion_body(tokens, finish, tops)};
  }

  const auto close = rest.find(kThinkClose);
  if (close == std::string::npos) return error(400, "prompt has no </think> after the reasoning");
  const std::size_t at = close;
  if (at > joined.size() || joined.compare(0, at, rest, 0, at) != 0) {
    return error(400, "reasoning in the prompt does not match the recording");
  }

  const json* entry = nullptr;
  if (ex->contains("answers")) {
    for (const auto& a : ex->at("answers")) {
      const auto a_at = a.value("at", std::size_t{0});
      if (a_at <= at && (!entry || a_at >= entry->value("at", std::size_t{0}))) entry = &a;
    }
  }
  if (at == joined.size() && max_tokens > 1 && ex->contains("final")) entry = &ex->at("final");
  if (!entry) return error(404, "no recorded answer at byte " + std::to_string(at));

  std::vector<std::string> tokens;
  json tops = json::array();
  if (entry->contains("top")) {
    const json& top = (*entry)["top"];
    std::string best;
    double best_lp = -INFINITY;
    for (const auto& [k, v] : top.items()) {
      const double lp = v.get<double>();
      if (lp > best_lp || (lp == best_lp && k < best)) {
        best = k;
        best_lp = lp;
      }
    }
    tokens.push_back(best);
    tops.push_back(top);
  } else {
    tokens = tokenize(entry->value("text", std::string()));
    for (const auto& t : tokens) tops.push_back({{t, -0.05}});
  }
  std::string finish = "stop";
  if (tokens.size() > static_cast<std::size_t>(max_tokens)) {
    tokens.resize(static_cast<std::size_t>(max_tokens));
    tops.erase(tops.begin() + max_tokens, tops.end());
    finish = "length";
  }
  apply_stop(tokens, stops);
  if (tops.size() > tokens.size()) tops.erase(tops.begin() + static_cast<std::ptrdiff_t>(tokens.size()), tops.end());
  return {200, completion_body(tokens, finish, tops)};
}

std::vector<double> MockModel::hashed_embedding(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  for (const auto& w : tokenize(text)) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : w) {
      h ^= static_cast<unsigned char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
      h *= 1099511628211ULL;
    }
    v[h % dim] += (h >> 32) & 1 ? 1.0 : -1.0;
  }
  double n = 0;
  for (double x : v) n += x * x;
  if (n == 0) {
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

Reply MockModel::embed(const json& req) {
  ++embeddings_;
  if (should_fail()) return error(503, "temporarily unavailable");
  if (!req.contains("input") || !req["input"].is_string()) return error(400, "missing input");
  const std::string text = req["input"];
  std::vector<double> v;
  std::size_t dim = 16;
  if (recording_.contains("embeddings") && !recording_["embeddings"].empty()) {
    const auto& recorded = recording_["embeddings"];
    if (recorded.contains(text)) {
      v = recorded[text].get<std::vector<double>>();
    } else {
      dim = recorded.begin()->size();  // keep one dimension per endpoint
    }
  }
  if (v.empty()) v = hashed_embedding(text, dim);
  return {200, {{"object", "list"}, {"data", json::array({{{"index", 0}, {"embedding", v}}})}}};
}

void mount(httplib::Server& server, MockModel& model) {
  auto handler = [](MockModel& m, Reply (MockModel::*fn)(const json&)) {
    return [&m, fn](const httplib::Request& req, httplib::Response& res) {
      Reply r;
      try {
        r = (m.*fn)(json::parse(req.body));
      } catch (const std::exception& e) {
        r = error(400, e.what());
      }
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
  };
  server.Post("/v1/completions", handler(model, &MockModel::complete));
  server.Post("/v1/embeddings", handler(model, &MockModel::embed));
}

}  // namespace mock

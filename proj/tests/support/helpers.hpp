#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "datastore.hpp"
#include "hidden_dump.hpp"
#include "mock_model.hpp"
#include "trace_model.hpp"

namespace testing {

inline const std::filesystem::path kFixtures = THINKSTOP_FIXTURES_DIR;
inline const std::filesystem::path kGolden = THINKSTOP_GOLDEN_DIR;

// 136-step reference series with short flips and late switches.
inline const std::string kReference =
    "BBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBBCCBBDDBBBBBBBDDDBBBBBBBBBBBBBB"
    "CCCCCBCBCCCCCCCCCCCCCCCCCCCCCCCCCC";

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Fresh, empty directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline thinkstop::AnswerTrajectory letters(const std::string& s, const std::string& id = "t",
                                           std::int64_t tokens_per_step = 10) {
  thinkstop::AnswerTrajectory t;
  t.trace_id = id;
  for (char c : s) t.labels.emplace_back(thinkstop::Choice{std::string(1, c)});
  t.cum_tokens.push_back(0);
  for (std::size_t i = 1; i < s.size(); ++i) t.cum_tokens.push_back(t.cum_tokens.back() + tokens_per_step);
  return t;
}

inline std::vector<int> as_ints(const thinkstop::AnswerTrajectory& t) {
  std::vector<int> out;
  for (const auto& l : t.labels) out.push_back(thinkstop::label_text(l)[0] - 'A');
  return out;
}

// Mock endpoint on a free local port for the lifetime of the object.
class MockServer {
 public:
  explicit MockServer(const nlohmann::json& recording) : model_(recording) {
    mock::mount(server_, model_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  explicit MockServer(const std::filesystem::path& recording)
      : MockServer(nlohmann::json::parse(slurp(recording))) {}
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  mock::MockModel& model() { return model_; }

  nlohmann::json endpoint_json() const {
    return {{"completion_url", base() + "/v1/completions"},
            {"embedding_url", base() + "/v1/embeddings"},
            {"model", "mock"},
            {"retries", 2},
            {"backoff_initial_seconds", 0.01},
            {"backoff_max_seconds", 0.02},
            {"generation", {{"max_tokens", 200}}}};
  }

 private:
  mock::MockModel model_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

// Dump whose step vectors at `signal_layer` sit at +margin along `direction`
// after t* and -margin before, plus unit noise; other layers are pure noise.
inline thinkstop::HiddenStateDump synthetic_dump(const std::string& id, std::uint32_t steps, std::int64_t t_star,
                                                 std::uint32_t layers, std::uint32_t dim,
                                                 std::uint32_t signal_layer, const std::vector<double>& direction,
                                                 std::mt19937_64& gen, double margin = 2.0) {
  thinkstop::HiddenStateDump d;
  d.trace_id = id;
  d.layers = layers;
  d.dim = dim;
  d.steps = steps;
  d.data.resize(static_cast<std::size_t>(steps) * layers * dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::uint32_t s = 0; s < steps; ++s) {
    const double sign = static_cast<std::int64_t>(s) > t_star ? 1.0 : -1.0;
    for (std::uint32_t l = 0; l < layers; ++l) {
      auto v = d.at(s, l);
      for (std::uint32_t j = 0; j < dim; ++j) {
        double x = noise(gen);
        if (l == signal_layer) x += sign * margin * direction[j];
        v[j] = static_cast<float>(x);
      }
    }
  }
  return d;
}

// Writes `count` trajectories whose answer changes once at a random t*, and
// one matching dump per trace under dumps/.
inline std::vector<thinkstop::TrajectoryRecord> synthetic_run(const std::filesystem::path& dir,
                                                              const std::string& prefix, thinkstop::TaskKind task,
                                                              int count, std::uint32_t layers, std::uint32_t dim,
                                                              std::uint32_t signal_layer,
                                                              const std::vector<double>& direction,
                                                              std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<thinkstop::TrajectoryRecord> recs;
  auto label = [&](const std::string& s) -> thinkstop::AnswerLabel {
    if (task == thinkstop::TaskKind::Numeric) return thinkstop::Token{s == "A" ? "12" : "16"};
    return thinkstop::Choice{s};
  };
  std::filesystem::create_directories(dir / "dumps");
  for (int i = 0; i < count; ++i) {
    const std::uint32_t n = 4 + static_cast<std::uint32_t>(gen() % 12);
    const std::int64_t t_star = static_cast<std::int64_t>(gen() % (n + 1)) - 1;
    thinkstop::TrajectoryRecord r;
    r.task = task;
    r.trajectory.trace_id = prefix + std::to_string(i);
    for (std::int64_t s = 0; s <= static_cast<std::int64_t>(n); ++s) {
      r.trajectory.labels.push_back(label(s <= t_star ? "A" : "B"));
      r.trajectory.cum_tokens.push_back(s * 7 + (s > 0 ? static_cast<std::int64_t>(gen() % 5) : 0));
    }
    for (std::size_t s = 1; s < r.trajectory.cum_tokens.size(); ++s) {
      r.trajectory.cum_tokens[s] = std::max(r.trajectory.cum_tokens[s], r.trajectory.cum_tokens[s - 1]);
    }
    r.final_answer = r.trajectory.labels.back();
    r.gold = label("B");
    thinkstop::write_dump(dir / "dumps" / thinkstop::dump_file_name(r.trajectory.trace_id),
                          synthetic_dump(r.trajectory.trace_id, n + 1, t_star, layers, dim, signal_layer, direction, gen));
    recs.push_back(std::move(r));
  }
  thinkstop::write_trajectories(dir / "trajectories.jsonl", recs);
  return recs;
}

inline std::vector<double> unit_direction(std::uint32_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0, 1);
  std::vector<double> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = nd(gen);
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace testing

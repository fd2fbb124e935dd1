#include "datastore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include "errors.hpp"
#include "fileio.hpp"
#include "rng.hpp"

namespace thinkstop {

namespace {

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line_no, line);
    pos = end + 1;
  }
}

template <class Parse>
auto parse_jsonl(std::string_view text, const std::string& source, Parse&& parse) {
  using Record = decltype(parse(std::declval<const ordered_json&>()));
  std::vector<Record> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    try {
      out.push_back(parse(ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

template <class T>
std::optional<std::vector<T>> optional_list(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::vector<T>>();
}

std::optional<AnswerLabel> optional_label(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return label_from_json(j[key]);
}

ordered_json optional_to_json(const std::optional<AnswerLabel>& l) {
  return l ? label_to_json(*l) : ordered_json(nullptr);
}

template <class T>
ordered_json optional_to_json(const std::optional<std::vector<T>>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

void check_unique(const std::vector<std::string>& ids, const std::string& source) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError(source + ": duplicate id '" + id + "'");
  }
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::span<const char> b, std::size_t off, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
  return v;
}

}  // namespace

ordered_json label_to_json(const AnswerLabel& label) {
  return std::visit(
      [](const auto& v) -> ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Choice>) {
          return {{"kind", "choice"}, {"value", v.label}};
        } else if constexpr (std::is_same_v<T, Token>) {
          return {{"kind", "token"}, {"value", v.text}};
        } else if constexpr (std::is_same_v<T, Tool>) {
          return {{"kind", "tool"}, {"value", v.name}, {"valid", v.valid}};
        } else {
          return {{"kind", "query"}, {"value", v.text}, {"embedding", v.embedding}};
        }
      },
      label);
}

AnswerLabel label_from_json(const ordered_json& j) {
  const auto kind = j.at("kind").get<std::string>();
  auto value = j.at("value").get<std::string>();
  if (kind == "choice") return Choice{std::move(value)};
  if (kind == "token") return Token{std::move(value)};
  if (kind == "tool") return Tool{std::move(value), j.value("valid", true)};
  if (kind == "query") {
    Query q{std::move(value), j.at("embedding").get<std::vector<double>>()};
    double norm = 0.0;
    for (double x : q.embedding) norm += x * x;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) throw FormatError("query embedding is not unit norm");
    return q;
  }
  throw FormatError("unknown label kind '" + kind + "'");
}

namespace {
const std::vector<std::string> kTraceKeys{"id",           "task",        "context", "reasoning_text",
                                          "step_spans",   "token_offsets", "final_answer", "gold",
                                          "options",      "tools",       "flags"};
}

ordered_json trace_to_json(const TraceRecord& t) {
  ordered_json j;
  j["id"] = t.id;
  j["task"] = to_string(t.task);
  j["context"] = t.context;
  j["reasoning_text"] = t.reasoning_text;
  ordered_json spans = ordered_json::array();
  for (const auto& s : t.step_spans) spans.push_back({s.begin, s.end});
  j["step_spans"] = std::move(spans);
  j["token_offsets"] = t.token_offsets;
  j["final_answer"] = optional_to_json(t.final_answer);
  j["gold"] = optional_to_json(t.gold);
  j["options"] = optional_to_json(t.options);
  j["tools"] = optional_to_json(t.tools);
  j["flags"] = t.flags;
  if (t.extra.is_object()) {
    for (const auto& [k, v] : t.extra.items()) j[k] = v;
  }
  return j;
}

TraceRecord trace_from_json(const ordered_json& j) {
  TraceRecord t;
  t.id = j.at("id").get<std::string>();
  t.task = parse_task(j.at("task").get<std::string>());
  t.context = j.at("context").get<std::string>();
  t.reasoning_text = j.at("reasoning_text").get<std::string>();
  for (const auto& s : j.at("step_spans")) {
    if (!s.is_array() || s.size() != 2) throw FormatError("step span must be [begin, end]");
    t.step_spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
  }
  t.token_offsets = j.at("token_offsets").get<std::vector<std::size_t>>();
  t.final_answer = optional_label(j, "final_answer");
  t.gold = optional_label(j, "gold");
  t.options = optional_list<std::string>(j, "options");
  t.tools = optional_list<std::string>(j, "tools");
  if (j.contains("flags")) t.flags = j["flags"].get<std::vector<std::string>>();
  for (const auto& [k, v] : j.items()) {
    if (std::find(kTraceKeys.begin(), kTraceKeys.end(), k) == kTraceKeys.end()) t.extra[k] = v;
  }
  if (t.final_answer && t.final_answer->index() != label_index_for(t.task)) {
    throw FormatError("final_answer kind does not match task");
  }
  t.validate();
  return t;
}

ordered_json trajectory_to_json(const TrajectoryRecord& rec) {
  ordered_json j;
  j["trace_id"] = rec.trajectory.trace_id;
  j["task"] = to_string(rec.task);
  ordered_json labels = ordered_json::array();
  for (const auto& l : rec.trajectory.labels) labels.push_back(label_to_json(l));
  j["labels"] = std::move(labels);
  j["cum_tokens"] = rec.trajectory.cum_tokens;
  j["final_answer"] = optional_to_json(rec.final_answer);
  j["gold"] = optional_to_json(rec.gold);
  j["flags"] = rec.flags;
  return j;
}

TrajectoryRecord trajectory_from_json(const ordered_json& j) {
  TrajectoryRecord rec;
  rec.trajectory.trace_id = j.at("trace_id").get<std::string>();
  rec.task = parse_task(j.at("task").get<std::string>());
  for (const auto& l : j.at("labels")) rec.trajectory.labels.push_back(label_from_json(l));
  rec.trajectory.cum_tokens = j.at("cum_tokens").get<std::vector<std::int64_t>>();
  rec.final_answer = optional_label(j, "final_answer");
  rec.gold = optional_label(j, "gold");
  if (j.contains("flags")) rec.flags = j["flags"].get<std::vector<std::string>>();
  rec.trajectory.validate();
  if (rec.trajectory.labels.front().index() != label_index_for(rec.task)) {
    throw FormatError("label kind does not match task");
  }
  return rec;
}

DatasetRow dataset_row_from_json(const ordered_json& j) {
  DatasetRow row;
  row.id = j.at("id").get<std::string>();
  row.task = parse_task(j.at("task").get<std::string>());
  row.context = j.at("context").get<std::string>();
  row.options = optional_list<std::string>(j, "options");
  row.tools = optional_list<std::string>(j, "tools");
  if (j.contains("gold") && !j["gold"].is_null()) {
    const auto& g = j["gold"];
    if (g.is_string()) {
      auto v = g.get<std::string>();
      switch (row.task) {
        case TaskKind::MCQ:
          row.gold = Choice{v};
          break;
        case TaskKind::Numeric:
          row.gold = Token{v};
          break;
        case TaskKind::ToolSelection:
          row.gold = Tool{v, true};
          break;
        case TaskKind::SearchQuery:
          throw FormatError("search-query rows carry no gold label");
      }
    } else {
      row.gold = label_from_json(g);
    }
    if (row.gold->index() != label_index_for(row.task)) throw FormatError("gold kind does not match task");
  }
  return row;
}

std::vector<DatasetRow> read_dataset(const std::filesystem::path& path) {
  auto rows = parse_jsonl(read_file(path), path.string(), dataset_row_from_json);
  std::vector<std::string> ids;
  for (const auto& r : rows) ids.push_back(r.id);
  check_unique(ids, path.string());
  return rows;
}

std::vector<TraceRecord> parse_traces(std::string_view text) {
  auto traces = parse_jsonl(text, "traces", trace_from_json);
  std::vector<std::string> ids;
  for (const auto& t : traces) ids.push_back(t.id);
  check_unique(ids, "traces");
  return traces;
}

std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
  try {
    return parse_traces(read_file(path));
  } catch (const DataError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_traces(std::span<const TraceRecord> traces) {
  std::string out;
  for (const auto& t : traces) {
    out += trace_to_json(t).dump();
    out += '\n';
  }
  return out;
}

void write_traces(const std::filesystem::path& path, std::span<const TraceRecord> traces) {
  write_file_atomic(path, serialize_traces(traces));
}

std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path) {
  auto recs = parse_jsonl(read_file(path), path.string(), trajectory_from_json);
  std::vector<std::string> ids;
  for (const auto& r : recs) ids.push_back(r.trajectory.trace_id);
  check_unique(ids, path.string());
  return recs;
}

std::string serialize_trajectories(std::span<const TrajectoryRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += trajectory_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRecord> records) {
  write_file_atomic(path, serialize_trajectories(records));
}

std::vector<char> encode_probe(const ProbeModel& probe) {
  std::vector<char> out{'P', 'R', 'B', '1'};
  put_u32(out, kProbeVersion);
  put_u32(out, probe.layer);
  put_u32(out, static_cast<std::uint32_t>(probe.w.size()));
  for (double v : probe.w) put_f64(out, v);
  put_f64(out, probe.b);
  return out;
}

ProbeModel decode_probe(std::span<const char> bytes) {
  if (bytes.size() < 16) throw FormatError("probe record shorter than its header");
  if (std::memcmp(bytes.data(), "PRB1", 4) != 0) throw FormatError("bad probe magic");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kProbeVersion) throw FormatError("unsupported probe version " + std::to_string(version));
  ProbeModel p;
  p.layer = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  const auto d = static_cast<std::size_t>(get_le(bytes, 12, 4));
  if (bytes.size() != 16 + 8 * (d + 1)) {
    throw FormatError("probe record is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(16 + 8 * (d + 1)));
  }
  p.w.resize(d);
  for (std::size_t i = 0; i < d; ++i) p.w[i] = std::bit_cast<double>(get_le(bytes, 16 + 8 * i, 8));
  p.b = std::bit_cast<double>(get_le(bytes, 16 + 8 * d, 8));
  for (double v : p.w) {
    if (!std::isfinite(v)) throw FormatError("probe weights are not finite");
  }
  if (!std::isfinite(p.b)) throw FormatError("probe bias is not finite");
  return p;
}

void write_probe(const std::filesystem::path& path, const ProbeModel& probe) {
  const auto bytes = encode_probe(probe);
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

ProbeModel read_probe(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_probe(std::span<const char>(bytes.data(), bytes.size()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Split split_ids(std::vector<std::string> ids, double train_ratio, double validation_ratio, double test_ratio,
                std::uint64_t seed) {
  if (ids.empty()) throw DataError("cannot split an empty id list");
  if (!(train_ratio > 0 && validation_ratio > 0 && test_ratio > 0)) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(train_ratio + validation_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  check_unique(ids, "split");
  std::sort(ids.begin(), ids.end());
  rng::Engine eng(rng::derive(seed, "split"));
  rng::shuffle(ids.begin(), ids.end(), eng);

  const double n = static_cast<double>(ids.size());
  const auto n_val = static_cast<std::size_t>(std::floor(validation_ratio * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(test_ratio * n + 1e-9));
  const std::size_t n_train = ids.size() - n_val - n_test;

  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                      ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return s;
}

ordered_json split_to_json(const Split& split) {
  return {{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
}

Split split_from_json(const ordered_json& j) {
  Split s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string metrics_rows_table(std::span<const MetricsRow> rows) {
  std::string out =
      "trace_id\tt_star_raw\tt_star_denoised\tswitches_raw\tswitches_denoised\ttafs\tt_after_raw\t"
      "t_after_denoised\tt_total\tfraction_after_raw\tfraction_after_denoised\n";
  for (const auto& r : rows) {
    out += r.trace_id + '\t' + std::to_string(r.t_star_raw) + '\t' + std::to_string(r.t_star_denoised) + '\t' +
           std::to_string(r.switches_raw) + '\t' + std::to_string(r.switches_denoised) + '\t' +
           std::to_string(r.tafs) + '\t' + std::to_string(r.t_after_raw) + '\t' +
           std::to_string(r.t_after_denoised) + '\t' + std::to_string(r.t_total) + '\t' +
           format_fixed(r.fraction_after_raw, 6) + '\t' + format_fixed(r.fraction_after_denoised, 6) + '\n';
  }
  return out;
}

std::string summary_table(const MetricsSummary& s) {
  std::string out =
      "n\tno_switch_raw_pct\tno_switch_denoised_pct\tswitches_raw\tswitches_denoised\ttafs\t"
      "t_after_raw\tt_after_raw_pct\tt_after_denoised\tt_after_denoised_pct\t"
      "n_switched_raw\tt_after_raw_given_switch\tt_after_raw_pct_given_switch\t"
      "n_switched_denoised\tt_after_denoised_given_switch\tt_after_denoised_pct_given_switch\n";
  out += std::to_string(s.n) + '\t' + format_fixed(s.no_switch_raw_pct, 3) + '\t' +
         format_fixed(s.no_switch_denoised_pct, 3) + '\t' + format_fixed(s.switches_raw, 4) + '\t' +
         format_fixed(s.switches_denoised, 4) + '\t' + format_fixed(s.tafs, 4) + '\t' +
         format_fixed(s.t_after_raw, 3) + '\t' + format_fixed(s.t_after_raw_pct, 3) + '\t' +
         format_fixed(s.t_after_denoised, 3) + '\t' + format_fixed(s.t_after_denoised_pct, 3) + '\t' +
         std::to_string(s.n_switched_raw) + '\t' + format_fixed(s.t_after_raw_given_switch, 3) + '\t' +
         format_fixed(s.t_after_raw_pct_given_switch, 3) + '\t' + std::to_string(s.n_switched_denoised) + '\t' +
         format_fixed(s.t_after_denoised_given_switch, 3) + '\t' +
         format_fixed(s.t_after_denoised_pct_given_switch, 3) + '\n';
  return out;
}

std::string frontier_table(std::span<const FrontierRow> rows, TaskKind task) {
  std::string out = task == TaskKind::SearchQuery ? "cosine_similarity" : "accuracy_drop";
  out += "\ttokens_saved\ttoken_pct\ttau\tn_examples\n";
  for (const auto& r : rows) {
    out += format_fixed(r.quality_delta, 6) + '\t' + format_fixed(r.mean_tokens_saved, 3) + '\t' +
           format_fixed(r.token_pct_saved, 3) + '\t' + format_fixed(r.tau, 9) + '\t' +
           std::to_string(r.n_examples) + '\n';
  }
  return out;
}

std::string frontier_plot_data(std::span<const FrontierRow> rows, const std::string& gate) {
  std::string out = "# gate=" + gate + "\n# x=tokens_saved y=quality\n";
  for (const auto& r : rows) out += format_fixed(r.mean_tokens_saved, 3) + ' ' + format_fixed(r.quality_delta, 6) + '\n';
  return out;
}

std::size_t default_sample_size(TaskKind task) {
  switch (task) {
    case TaskKind::MCQ:
      return 1000;
    case TaskKind::Numeric:
      return 500;
    case TaskKind::SearchQuery:
      return 1000;
    case TaskKind::ToolSelection:
      return 1000;
  }
  return 1000;
}

}  // namespace thinkstop

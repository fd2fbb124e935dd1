#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "datastore.hpp"
#include "errors.hpp"
#include "hidden_dump.hpp"
#include "support/helpers.hpp"

using namespace thinkstop;

namespace {

void le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::vector<char> bytes(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("HSD1 byte layout") {
  // 2 layers, dim 3, 2 steps written by hand
  std::string raw = "HSD1";
  le32(raw, 1);
  le32(raw, 2);
  le32(raw, 3);
  le32(raw, 2);
  std::vector<float> payload;
  for (int i = 0; i < 12; ++i) payload.push_back(0.5f * static_cast<float>(i) - 1.0f);
  for (float f : payload) le32(raw, std::bit_cast<std::uint32_t>(f));
  REQUIRE(raw.size() == kHsdHeaderBytes + 12 * 4);

  const auto d = decode_dump(bytes(raw));
  CHECK(d.layers == 2);
  CHECK(d.dim == 3);
  CHECK(d.steps == 2);
  // step-major, then layer
  CHECK(d.at(1, 0)[2] == payload[(1 * 2 + 0) * 3 + 2]);
  CHECK(d.at(0, 1)[0] == payload[3]);
  const auto enc = encode_dump(d);
  CHECK(std::string(enc.begin(), enc.end()) == raw);

  auto bad = raw;
  bad[3] = '2';
  CHECK_THROWS_AS(decode_dump(bytes(bad)), FormatError);
  bad = raw;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_dump(bytes(bad)), FormatError);
  CHECK_THROWS_AS(decode_dump(bytes(raw.substr(0, raw.size() - 1))), FormatError);
  CHECK_THROWS_AS(decode_dump(bytes(raw + "x")), FormatError);

  auto nan = raw;
  const auto q = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  std::memcpy(nan.data() + kHsdHeaderBytes, &q, 4);
  CHECK_THROWS_AS(decode_dump(bytes(nan)), FormatError);
  CHECK(std::isnan(decode_dump(bytes(nan), false).data[0]));
}

TEST_CASE("HSD1 files round-trip bit-exactly") {
  const auto dir = testing::scratch("hsd");
  std::mt19937_64 gen(1);
  HiddenStateDump d;
  d.layers = 5;
  d.dim = 7;
  d.steps = 9;
  for (std::size_t i = 0; i < 5 * 7 * 9; ++i) d.data.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(gen() & 0x7f7fffffu)));
  write_dump(dir / "a.hsd", d);
  const auto back = read_dump(dir / "a.hsd");
  CHECK(std::memcmp(back.data.data(), d.data.data(), d.data.size() * 4) == 0);
  CHECK(testing::slurp(dir / "a.hsd").size() == kHsdHeaderBytes + d.data.size() * 4);
}

TEST_CASE("dump file names") {
  CHECK(dump_file_name("mcq-001") == "mcq-001.hsd");
  CHECK(dump_file_name("a/b c") == "a%2Fb%20c.hsd");
  CHECK(dump_file_name("..") == "...hsd");
}

TEST_CASE("PRB1 byte layout and round trip") {
  ProbeModel p;
  p.layer = 7;
  p.w = {0.1, -2.5, 1e-300};
  p.b = -0.75;
  std::string raw = "PRB1";
  le32(raw, 1);
  le32(raw, 7);
  le32(raw, 3);
  for (double w : p.w) le64(raw, std::bit_cast<std::uint64_t>(w));
  le64(raw, std::bit_cast<std::uint64_t>(-0.75));
  const auto enc = encode_probe(p);
  CHECK(std::string(enc.begin(), enc.end()) == raw);
  const auto back = decode_probe(bytes(raw));
  CHECK(back.w == p.w);
  CHECK(back.b == p.b);
  CHECK(back.layer == 7);
  CHECK_THROWS_AS(decode_probe(bytes(raw.substr(0, raw.size() - 2))), FormatError);

  const auto dir = testing::scratch("prb");
  write_probe(dir / "p.prb", p);
  CHECK(testing::slurp(dir / "p.prb") == raw);
}

TEST_CASE("trace JSON round trip keeps unknown keys") {
  const std::string line =
      R"({"id":"x","task":"mcq","context":"C","reasoning_text":"Ab. Cd.","step_spans":[[0,4],[4,7]],)"
      R"("token_offsets":[0,2,4,6],"final_answer":{"kind":"choice","value":"B"},"gold":{"kind":"choice","value":"B"},)"
      R"("options":["A","B"],"tools":null,"flags":[],"annotator":"n1"})";
  const auto traces = parse_traces(line + "\n");
  REQUIRE(traces.size() == 1);
  CHECK(traces[0].step_count() == 2);
  CHECK(serialize_traces(traces) == line + "\n");
  CHECK_THROWS_AS(parse_traces(line + "\n" + line + "\n"), DataError);
  CHECK_THROWS_AS(parse_traces("{\"id\":\"x\"}\n"), DataError);
}

TEST_CASE("trajectory files round trip") {
  const auto path = testing::kFixtures / "mcq50" / "trajectories.jsonl";
  const auto recs = read_trajectories(path);
  CHECK(recs.size() == 50);
  CHECK(serialize_trajectories(recs) == testing::slurp(path));
  // The fixture's embeddings were printed by another JSON writer, so compare
  // values once and bytes from the first rewrite on.
  const auto search = read_trajectories(testing::kFixtures / "search12" / "trajectories.jsonl");
  const auto once = serialize_trajectories(search);
  const auto dir = testing::scratch("trajectories");
  testing::spit(dir / "t.jsonl", once);
  const auto reread = read_trajectories(dir / "t.jsonl");
  CHECK(serialize_trajectories(reread) == once);
  REQUIRE(reread.size() == search.size());
  for (std::size_t i = 0; i < search.size(); ++i) CHECK(reread[i].trajectory.labels == search[i].trajectory.labels);
}

TEST_CASE("dataset rows") {
  const auto row = dataset_row_from_json(ordered_json::parse(R"({"id":"a","task":"numeric","context":"c","gold":"16"})"));
  CHECK(std::get<Token>(*row.gold).text == "16");
  CHECK_THROWS_AS(dataset_row_from_json(ordered_json::parse(R"({"id":"a","task":"search_query","context":"c","gold":"q"})")),
                  DataError);
  CHECK_THROWS(dataset_row_from_json(ordered_json::parse(R"({"id":"a","task":"poem","context":"c"})")));
}

TEST_CASE("splits") {
  std::vector<std::string> ids;
  for (int i = 0; i < 103; ++i) ids.push_back("id" + std::to_string(i));
  const auto a = split_ids(ids, 0.8, 0.1, 0.1, 5);
  CHECK(a.validation.size() == 10);
  CHECK(a.test.size() == 10);
  CHECK(a.train.size() == 83);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 103);

  auto shuffled = ids;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto b = split_ids(shuffled, 0.8, 0.1, 0.1, 5);
  CHECK(b.test == a.test);
  CHECK(split_ids(ids, 0.8, 0.1, 0.1, 6).test != a.test);
  CHECK(split_from_json(split_to_json(a)).validation == a.validation);
  CHECK_THROWS_AS(split_ids(ids, 0.8, 0.3, 0.1, 5), ConfigError);
}

TEST_CASE("fixed formatting") {
  CHECK(format_fixed(1.0 / 3.0, 3) == "0.333");
  CHECK(format_fixed(-0.0001, 2) == "0.00");
  CHECK(format_fixed(2.5, 0) == "2");
  CHECK(format_fixed(1234.5678, 1) == "1234.6");
}

TEST_CASE("report tables have fixed columns") {
  MetricsSummary s;
  s.n = 1;
  const auto table = summary_table(s);
  CHECK(table.rfind("n\tno_switch_raw_pct\tno_switch_denoised_pct\tswitches_raw\tswitches_denoised\ttafs\t", 0) == 0);
  const std::vector<FrontierRow> rows{{0.5, 10.0, 25.0, 2.0, 4}};
  CHECK(frontier_table(rows, TaskKind::MCQ) ==
        "accuracy_drop\ttokens_saved\ttoken_pct\ttau\tn_examples\n2.000000\t10.000\t25.000\t0.500000000\t4\n");
  CHECK(frontier_table(rows, TaskKind::SearchQuery).rfind("cosine_similarity\t", 0) == 0);
  CHECK(frontier_plot_data(rows, "probe") == "# gate=probe\n# x=tokens_saved y=quality\n10.000 2.000000\n");
}

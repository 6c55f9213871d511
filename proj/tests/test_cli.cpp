#include "adp/commands.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace adp;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CountingTransport final : public Transport {
 public:
  int calls = 0;
  HttpResponse post_json(const std::string&, const std::string&,
                         std::chrono::milliseconds) override {
    ++calls;
    throw ClassifierError(ClassifierErrorKind::kNetwork, "no network in tests");
  }
};

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("adp_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& s) const { return (dir / s).string(); }
};

int run_cli(std::vector<std::string> args, Transport* t = nullptr,
            std::string* out_text = nullptr) {
  std::ostringstream out, err;
  args.insert(args.begin(), "adp");
  const int rc = cli::run(args, cli::Context{t, &out, &err});
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("budget specs") {
  const auto f = cli::parse_budget_spec("fixed:8,100");
  CHECK(f.kind == cli::BudgetSpec::Kind::kFixed);
  CHECK(f.fixed.n_action_steps == 8);
  CHECK(f.fixed.num_inference_steps == 100);
  CHECK(cli::parse_budget_spec("oracle-hvts").kind == cli::BudgetSpec::Kind::kOracleHvts);
  const auto t = cli::parse_budget_spec("table:/tmp/x.json");
  CHECK(t.kind == cli::BudgetSpec::Kind::kTable);
  CHECK(t.table_path == fs::path("/tmp/x.json"));
  CHECK_THROWS_AS(cli::parse_budget_spec("fixed:8"), cli::CliError);
  CHECK_THROWS_AS(cli::parse_budget_spec("fixed:0,10"), cli::CliError);
  CHECK_THROWS_AS(cli::parse_budget_spec("dynamic"), cli::CliError);
}

TEST_CASE("shipped data files match the built-in tables") {
  const std::string dir = ADP_REPO_DATA;
  const auto stages = cli::push_stage_templates();
  CHECK(read_file(dir + "/push_stages.json") == stage_templates_to_json(stages));
  CHECK(read_file(dir + "/push_schedule.json") == schedule_to_json(cli::default_push_schedule()));
  CHECK(cli::load_stage_file(dir + "/push_stages.json") == stages);
  const auto table = cli::load_schedule_file(dir + "/push_schedule.json", ScheduleRanges{});
  CHECK(table.entries == cli::default_push_schedule().entries);
  CHECK(has_hardest_entry(table));
  CHECK(cli::align_to_push_stages(table).entries == table.entries);
}

TEST_CASE("train with zero steps writes an empty report") {
  Scratch s("train0");
  REQUIRE(run_cli({"gen-data", "--n", "2", "--out", s / "g"}) == 0);
  REQUIRE(run_cli({"train", "--data", s / "g/demos.bin", "--steps", "0", "--out", s / "t"}) == 0);
  CHECK(read_file(s.dir / "t/report.csv") == "step,loss,eval_success,sampler_entropy\n");
  CHECK(fs::exists(s.dir / "t/checkpoint.bin"));
  const auto m = nlohmann::json::parse(read_file(s.dir / "t/manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["args"]["steps"] == 0);
}

TEST_CASE("decompose from mock replies never touches the network") {
  Scratch s("decompose");
  CountingTransport t;
  const std::string mock = std::string(ADP_TEST_DATA) + "/mock_listings";
  REQUIRE(run_cli({"decompose", "--mock", mock, "--i-max", "60", "--out", s / "d"}, &t) == 0);
  CHECK(t.calls == 0);
  CHECK(read_file(s.dir / "d/stages.json") == read_file(mock + "/decomposition.txt"));
  CHECK(read_file(s.dir / "d/schedule.json") == read_file(mock + "/schedule.txt"));
  CHECK(fs::exists(s.dir / "d/decomposition_prompt.txt"));

  // Without a mock or endpoint the command fails cleanly.
  std::string text;
  CHECK(run_cli({"decompose", "--endpoint", "", "--out", s / "e"}, &t, &text) != 0);
}

TEST_CASE("bench with identical fixed rows reports unit speedups") {
  Scratch s("bench");
  REQUIRE(run_cli({"gen-data", "--n", "2", "--out", s / "g"}) == 0);
  REQUIRE(run_cli({"train", "--data", s / "g/demos.bin", "--steps", "2", "--warmup", "1",
                   "--batch", "4", "--out", s / "t"}) == 0);
  std::string text;
  REQUIRE(run_cli({"bench", "--policy", s / "t/checkpoint.bin", "--episodes", "1", "--seeds",
                   "1", "--ddpm", "fixed:8,10", "--ddpm-hvts", "fixed:8,10", "--ddim",
                   "fixed:8,10", "--ddim-hvts", "fixed:8,10", "--out", s / "b"},
                  nullptr, &text) == 0);
  std::istringstream csv(read_file(s.dir / "b/report.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    const auto tail = line.substr(line.rfind(',', line.rfind(',') - 1) + 1);
    CHECK(tail == "1,0");
  }
  CHECK(rows == 4);
  CHECK(text.find("1.00x") != std::string::npos);
}

TEST_CASE("command-line flags override a config file") {
  Scratch s("config");
  REQUIRE(run_cli({"gen-data", "--n", "2", "--seed", "5", "--out", s / "g"}) == 0);
  // Re-run from the manifest, overriding the output directory and count.
  REQUIRE(run_cli({"--config", s / "g/manifest.json", "gen-data", "--n", "1", "--out", s / "h"}) == 0);
  const auto m = nlohmann::json::parse(read_file(s.dir / "h/manifest.json"));
  CHECK(m["args"]["n"] == 1);
  CHECK(m["args"]["seed"] == 5);

  // Sectioned config files work too.
  std::ofstream(s.dir / "cfg.json") << R"({"gen-data": {"n": 1, "seed": 9}})";
  REQUIRE(run_cli({"--config", s / "cfg.json", "gen-data", "--out", s / "k"}) == 0);
  const auto k = nlohmann::json::parse(read_file(s.dir / "k/manifest.json"));
  CHECK(k["args"]["seed"] == 9);
  CHECK(k["args"]["n"] == 1);
}

TEST_CASE("manifest replay reproduces eval outputs") {
  Scratch s("replay");
  REQUIRE(run_cli({"eval", "--policy", "expert", "--episodes", "3", "--seeds", "1,2",
                   "--schedule", "oracle-hvts", "--out", s / "a"}) == 0);
  REQUIRE(run_cli({"--config", s / "a/manifest.json", "eval", "--out", s / "b"}) == 0);
  for (const char* f : {"report.csv", "episodes.csv", "trace.csv"}) {
    CHECK(read_file(s.dir / "a" / f) == read_file(s.dir / "b" / f));
  }
  const auto rep = read_file(s.dir / "a/report.csv");
  CHECK(rep.find(",6,1,0,") != std::string::npos);
}

TEST_CASE("bad input exits nonzero") {
  Scratch s("bad");
  std::string text;
  CHECK(run_cli({}, nullptr, &text) != 0);
  CHECK(run_cli({"train", "--mode", "fancy", "--out", s / "x"}, nullptr, &text) != 0);
  CHECK(run_cli({"eval", "--policy", s / "missing.bin", "--out", s / "y"}, nullptr, &text) != 0);
  CHECK(text.find("error") != std::string::npos);
  CHECK(run_cli({"eval", "--policy", "expert", "--schedule", "fixed:8", "--out", s / "z"},
                nullptr, &text) != 0);
}

}  // TEST_SUITE

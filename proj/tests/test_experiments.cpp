#include "doctest.h"
#include "htica/experiments.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace htica::experiments;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("htica_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const std::vector<Diagnostic>& d, const std::string& field, const std::string& text) {
  for (const auto& x : d)
    if (x.field == field && x.message.find(text) != std::string::npos) return true;
  return false;
}

json small_config(const std::string& kind) {
  if (kind == "closeness") return {{"experiment", kind}, {"seed", 7}, {"params", {{"k_ladder", {4, 6}}}}};
  if (kind == "membership") return {{"experiment", kind}, {"seed", 7}, {"params", {{"trials", 6}, {"N", 500}}}};
  if (kind == "heavytail")
    return {{"experiment", kind}, {"seed", 7}, {"params", {{"trials", 40}, {"gamma", 0.6}, {"epsilon", {0.2, 0.3}}}}};
  if (kind == "weights")
    return {{"experiment", kind}, {"seed", 7}, {"params", {{"samples", 20000}, {"trials", 4}}}};
  return {{"experiment", kind}, {"seed", 7}, {"params", {{"trials", 30}}}};
}

}  // namespace

TEST_CASE("validate diagnostics") {
  const json missing_seed = {{"experiment", "smoothed"}};
  CHECK(mentions(validate(missing_seed), "seed", "seed required"));

  const json bad_gamma = {{"experiment", "heavytail"}, {"seed", 1}, {"params", {{"gamma", 1.5}}}};
  CHECK(mentions(validate(bad_gamma), "params.gamma", "(0,1)"));
  const json bad_gamma_member = {{"experiment", "membership"}, {"seed", 1}, {"params", {{"gamma", 1.5}}}};
  CHECK(mentions(validate(bad_gamma_member), "params.gamma", "(0,1)"));

  for (const char* k : {"closeness", "membership", "heavytail", "weights", "smoothed"}) {
    CHECK(validate(json{{"experiment", k}, {"seed", 0}}).empty());
    CHECK(validate(small_config(k)).empty());
  }

  CHECK(mentions(validate(json{{"experiment", "smoothed"}, {"seed", 1}, {"colour", 2}}), "colour", "unknown key"));
  CHECK(mentions(validate(json{{"experiment", "smoothed"}, {"seed", 1}, {"params", {{"N", 2}}}}), "params.N",
                 "unknown parameter"));
  CHECK(mentions(validate(json{{"experiment", "nope"}, {"seed", 1}}), "experiment", "must be one of"));
  CHECK(mentions(validate(json{{"experiment", "smoothed"}, {"seed", -1}}), "seed", "unsigned"));
  CHECK(mentions(validate(json{{"experiment", "smoothed"}, {"seed", 1}, {"params", {{"base", "csv"}}}}),
                 "params.base_path", "required"));
  CHECK(mentions(validate(json{{"experiment", "weights"}, {"seed", 1}, {"params", {{"w", {0.5, 0.6, 0.1}}}}}),
                 "params.w", "sum to 1"));
  CHECK(mentions(validate(json{{"experiment", "membership"},
                               {"seed", 1},
                               {"params", {{"inside_scale", 1.3}}}}),
                 "params.inside_scale", "smaller"));
  CHECK(!validate(json::array()).empty());
  CHECK_THROWS_AS(parse_config(missing_seed), ConfigError);
}

TEST_CASE("text validation reports lines") {
  const std::string text = "{\n  \"experiment\": \"heavytail\",\n  \"seed\": 3,\n  \"params\": {\"gamma\": 2}\n}\n";
  const auto d = validate_text(text);
  REQUIRE(d.size() == 1);
  CHECK(d[0].line == 4);
  CHECK(d[0].to_string().find("line 4") != std::string::npos);

  const auto syntax = validate_text("{\n  \"seed\": 3,\n  oops\n}");
  REQUIRE(syntax.size() == 1);
  CHECK(syntax[0].line == 3);
  CHECK(validate_text("{\"experiment\": \"closeness\", \"seed\": 0}").empty());
}

TEST_CASE("defaults and overrides") {
  json raw = {{"experiment", "closeness"}, {"seed", 9}};
  const ExperimentConfig c = parse_config(raw);
  CHECK(c.params["k_ladder"] == json::array({6, 10, 14, 18, 22}));
  CHECK(c.params["n"] == 1);

  apply_override(raw, "k_ladder=[3,4]");
  apply_override(raw, "params.precision=double");
  apply_override(raw, "seed=12");
  apply_override(raw, "output_path=out/a.csv");
  const ExperimentConfig d = parse_config(raw);
  CHECK(d.params["k_ladder"] == json::array({3, 4}));
  CHECK(d.params["precision"] == "double");
  CHECK(d.seed == 12);
  CHECK(d.output_path == "out/a.csv");
  CHECK_THROWS_AS(apply_override(raw, "novalue"), ConfigError);
}

TEST_CASE("output locations") {
  ExperimentConfig c = parse_config(json{{"experiment", "smoothed"}, {"seed", 4}});
  RunOptions opt;
  opt.output_dir = "/tmp/base";
  auto [csv, summary] = output_paths(c, opt);
  CHECK(csv == fs::path("/tmp/base/smoothed_4.csv"));
  CHECK(summary == fs::path("/tmp/base/smoothed_4.summary.json"));
  c.output_path = "/abs/x.csv";
  CHECK(output_paths(c, opt).first == fs::path("/abs/x.csv"));

  c.output_path = "rel.csv";
  ::setenv("HTICA_OUTPUT_DIR", "/tmp/from_env", 1);
  CHECK(output_paths(c, RunOptions{}).first == fs::path("/tmp/from_env/rel.csv"));
  ::unsetenv("HTICA_OUTPUT_DIR");
  CHECK(output_paths(c, RunOptions{}).first == fs::path("./rel.csv"));
}

TEST_CASE("every experiment writes its schema and is byte-reproducible") {
  const fs::path dir = scratch_dir("repro");
  for (const char* kind : {"closeness", "membership", "heavytail", "weights", "smoothed"}) {
    CAPTURE(kind);
    ExperimentConfig cfg = parse_config(small_config(kind));
    RunOptions one{1, dir / "a"}, many{4, dir / "b"};
    const RunResult ra = run(cfg, one);
    const RunResult rb = run(cfg, many);
    const RunResult rc = run(cfg, one);
    CHECK(ra.failed_rows == 0);
    CHECK(ra.rows > 0);
    const std::string a = slurp(ra.csv_path);
    CHECK(a == slurp(rb.csv_path));
    CHECK(a == slurp(rc.csv_path));
    CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));

    std::string header;
    for (const auto& col : csv_columns(cfg.experiment)) header += (header.empty() ? "" : ",") + col;
    CHECK(a.substr(0, a.find('\n')) == header);

    const json s = json::parse(slurp(ra.summary_path));
    CHECK(s["version"] == kVersion);
    CHECK(s["config"] == cfg.to_json());
    CHECK(s["rows"] == ra.rows);

    // A different seed changes the rows.
    cfg.seed += 1;
    CHECK(slurp(run(cfg, RunOptions{1, dir / "c"}).csv_path) != a);
  }
  fs::remove_all(dir);
}

TEST_CASE("closeness and membership column contracts") {
  const fs::path dir = scratch_dir("schema");
  const RunResult r = run(parse_config(small_config("membership")), RunOptions{2, dir});
  std::ifstream in(r.csv_path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "trial,query_class,answer,N_used,lp_iterations,seed,error");
  std::getline(in, line);
  CHECK(line.rfind("0,inside_e0,", 0) == 0);

  const auto cols = csv_columns(Kind::Closeness);
  CHECK(std::vector<std::string>(cols.begin(), cols.begin() + 6) ==
        std::vector<std::string>{"k", "h", "alpha", "beta", "l1_distance", "condition_number"});
  fs::remove_all(dir);
}

TEST_CASE("numerical failures are recorded per row") {
  const fs::path dir = scratch_dir("rowerr");
  // Two identical columns make A^(3) rank deficient.
  const json raw = {{"experiment", "weights"},
                    {"seed", 1},
                    {"params",
                     {{"n", 2}, {"A", {{1.0, 1.0}, {2.0, 2.0}}}, {"w", {0.5, 0.5}}, {"samples", 1000}, {"trials", 3}}}};
  const RunResult r = run(parse_config(raw), RunOptions{1, dir});
  CHECK(r.rows == 3);
  CHECK(r.failed_rows == 3);
  CHECK(slurp(r.csv_path).find("rank deficient") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("smoothed csv base") {
  const fs::path dir = scratch_dir("csvbase");
  {
    std::ofstream out(dir / "base.csv");
    out << "1,0,0\n0,1,0\n0,0,1\n";
  }
  json raw = {{"experiment", "smoothed"},
              {"seed", 2},
              {"params", {{"n", 3}, {"trials", 10}, {"base", "csv"}, {"base_path", (dir / "base.csv").string()}}}};
  const RunResult r = run(parse_config(raw), RunOptions{1, dir});
  CHECK(r.rows == 10);
  raw["params"]["n"] = 4;
  CHECK_THROWS_AS(run(parse_config(raw), RunOptions{1, dir}), ConfigError);
  raw["params"]["base_path"] = (dir / "missing.csv").string();
  CHECK_THROWS_AS(run(parse_config(raw), RunOptions{1, dir}), ConfigError);
  fs::remove_all(dir);
}

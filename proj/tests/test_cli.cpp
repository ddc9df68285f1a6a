#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <sstream>

#include "test_util.hpp"
#include "zozoom/cli.hpp"
#include "zozoom/config.hpp"
#include "zozoom/io.hpp"
#include "zozoom/report.hpp"

using namespace zozoom;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "zozoom");
  return run_cli(args);
}

std::string config_error(const nlohmann::json &j) {
  try {
    parse_attack_config(j, fs::path("."), ConfigOverrides{});
  } catch (const std::invalid_argument &e) {
    return e.what();
  }
  return "";
}

AttackTrace trace_at(std::optional<std::uint64_t> queries, double dist = 0.001) {
  AttackTrace t;
  t.total_queries = queries.value_or(100);
  if (queries) {
    t.initial_success = SuccessPoint{1, *queries, dist};
    t.best = BestExample{Tensor(), 1, *queries, dist};
  }
  return t;
}

std::vector<LoadedSummary> group(const std::string &method, double lambda,
                                 const std::vector<std::uint64_t> &queries) {
  std::vector<LoadedSummary> out;
  for (auto q : queries) {
    out.push_back({RunLabel{method, lambda, 1000000000, 0.004}, trace_at(q)});
  }
  return out;
}

std::vector<std::string> csv_fields(const std::string &line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) {
    f.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    f.emplace_back();
  }
  return f;
}

std::vector<std::string> csv_lines(const std::string &csv) {
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    lines.push_back(line);
  }
  return lines;
}

// A small model with two images and an ATK1 batch config.
fs::path make_fixture(const fs::path &dir) {
  REQUIRE(cli({"gen-model", "--out", (dir / "m").string(), "--shape", "8x8x1", "--classes",
               "3", "--kind", "smooth", "--images", "2", "--seed", "5"}) == kExitSuccess);
  return dir / "m";
}

nlohmann::json single_attack(const fs::path &m, std::size_t target, const fs::path &out) {
  return {{"format", "ATK1"},          {"model", (m / "model.json").string()},
          {"image", (m / "images/image_000.json").string()},
          {"mode", "targeted"},        {"target", target},
          {"output", out.string()},    {"query_budget", 4000},
          {"learning_rate", 0.02},     {"lambda_ini", 1.0},
          {"switch_period", 5},        {"decoder", "bilin:4x4"},
          {"seed", 11}};
}

} // namespace

TEST_CASE("config errors name the offending field") {
  const nlohmann::json base = {{"format", "ATK1"}, {"model", "m.json"},
                               {"image", "x.json"}, {"mode", "targeted"}, {"target", 1}};
  CHECK(config_error(base).empty());
  auto j = base;
  j.erase("model");
  CHECK(config_error(j).find("\"model\"") != std::string::npos);
  j = base;
  j["lambda_ini"] = -1;
  CHECK(config_error(j).find("\"lambda_ini\"") != std::string::npos);
  j = base;
  j["estimator"] = {{"kind", "nes"}};
  CHECK(config_error(j).find("\"estimator.kind\"") != std::string::npos);
  j = base;
  j["q_explore"] = 2;
  CHECK(config_error(j).find("\"q_explore\"") != std::string::npos);
  j = base;
  j.erase("target");
  CHECK(config_error(j).find("\"target\"") != std::string::npos);
  j = base;
  j["format"] = "ATK2";
  CHECK(config_error(j).find("\"format\"") != std::string::npos);
}

TEST_CASE("config defaults, overrides and seed precedence") {
  const nlohmann::json base = {{"format", "ATK1"}, {"model", "m.json"}, {"image", "x.json"},
                               {"mode", "untargeted"}, {"seed", 3}};
  auto job = parse_attack_config(base, fs::path("/data"), ConfigOverrides{});
  CHECK(job.model_path == fs::path("/data/m.json"));
  CHECK(job.attack.learning_rate == 2e-3);
  CHECK(job.attack.switch_period == 100);
  CHECK(job.attack.q_exploit == 4);
  CHECK(job.attack.rng_seed == 3);
  CHECK(job.method == "autozoom-identity");
  CHECK_FALSE(job.instances[0].label);

  ConfigOverrides o;
  o.seed = 9;
  o.estimator = "zoo";
  o.budget = 77;
  o.decoder = "bilin";
  job = parse_attack_config(base, fs::path("/data"), o);
  CHECK(job.attack.rng_seed == 9);
  CHECK(job.attack.estimator.kind == EstimatorKind::coordinate_wise);
  CHECK(job.attack.query_budget == 77);
  CHECK(job.method == "zoo-bilin");

  auto no_seed = base;
  no_seed.erase("seed");
  ::setenv("ZOZOOM_SEED", "21", 1);
  CHECK(parse_attack_config(no_seed, ".", ConfigOverrides{}).attack.rng_seed == 21);
  ::unsetenv("ZOZOOM_SEED");
  CHECK(parse_attack_config(no_seed, ".", ConfigOverrides{}).attack.rng_seed == 0);
}

TEST_CASE("report table arithmetic") {
  SUBCASE("single trace is its own baseline") {
    const auto rows = build_report(group("autozoom-bilin", 10.0, {500}));
    REQUIRE(rows.size() == 1);
    const auto lines = csv_lines(report_csv(rows));
    CHECK(lines[0] ==
          "method,lambda_ini,ASR,mean_queries_initial,query_reduction_ratio,"
          "mean_perpixel_dist_initial,TPR,mean_queries_to_threshold");
    CHECK(csv_fields(lines[1])[4] == "0.0000");
  }
  SUBCASE("zero successes leave the distortion columns empty") {
    std::vector<LoadedSummary> s{{RunLabel{"zoo-bilin", 0.1, 100, 0.004}, trace_at(std::nullopt)},
                                 {RunLabel{"zoo-bilin", 0.1, 100, 0.004}, trace_at(std::nullopt)}};
    const auto f = csv_fields(csv_lines(report_csv(build_report(s)))[1]);
    REQUIRE(f.size() == 8);
    CHECK(f[2] == "0.0000");
    CHECK(f[3].empty());
    CHECK(f[4].empty());
    CHECK(f[5].empty());
    CHECK(f[6].empty());
    CHECK(f[7].empty());
  }
  SUBCASE("published means reproduce the published ratio") {
    // 35737.60 = mean of five integer counts, 612.34 = 30617 / 50.
    auto all = group("zoo-bilin", 0.1, {35737, 35737, 35738, 35738, 35738});
    std::vector<std::uint64_t> method(50, 612);
    for (int i = 0; i < 17; ++i) {
      method[i] = 613;
    }
    const auto m = group("autozoom-bilin", 10.0, method);
    all.insert(all.end(), m.begin(), m.end());
    const auto rows = build_report(all);
    REQUIRE(rows.size() == 2);
    CHECK(*rows[0].summary.mean_queries_initial == doctest::Approx(35737.60));
    CHECK(*rows[1].summary.mean_queries_initial == doctest::Approx(612.34));
    const auto f = csv_fields(csv_lines(report_csv(rows))[2]);
    CHECK(std::abs(std::stod(f[4]) - 98.29) <= 0.01);
  }
  SUBCASE("version mismatch is an error") {
    auto j = summary_to_json(trace_at(10), RunLabel{"m", 1.0, 100, 0.004});
    j["version"] = 2;
    CHECK_THROWS_AS(summary_from_json(j), std::invalid_argument);
  }
}

TEST_CASE("attack command exit codes, outputs and determinism") {
  const auto dir = testutil::temp_dir("cli");
  const fs::path m = make_fixture(dir);
  for (const char *f : {"model.json", "attack.json", "manifest.json", "images/image_001.json"}) {
    CHECK(fs::exists(m / f));
  }
  const BlackBoxModel model = load_model(m / "model.json");
  const std::size_t top = argmax(model.query(load_tensor(m / "images/image_000.json")));

  SUBCASE("pre-satisfied target") {
    write_json_file(dir / "pre.json", single_attack(m, top, dir / "pre"));
    CHECK(cli({"attack", "--config", (dir / "pre.json").string(), "--budget", "50"}) ==
          kExitSuccess);
    const auto s = read_json_file(dir / "pre" / "summary.json");
    CHECK(s.at("initial_success").at("queries") == 1);
    CHECK(fs::exists(dir / "pre" / "best.json"));
    CHECK(read_json_file(dir / "pre" / "manifest.json").at("tool") == "zozoom");
  }
  SUBCASE("budget of one query") {
    write_json_file(dir / "q1.json", single_attack(m, (top + 1) % 3, dir / "q1"));
    CHECK(cli({"attack", "--config", (dir / "q1.json").string(), "--budget", "1"}) ==
          kExitNoSuccess);
    CHECK(read_json_file(dir / "q1" / "summary.json").at("initial_success").is_null());
  }
  SUBCASE("reruns are byte-identical") {
    write_json_file(dir / "r.json", single_attack(m, (top + 1) % 3, dir / "ignored"));
    const int a = cli({"attack", "--config", (dir / "r.json").string(), "--out",
                       (dir / "r1").string()});
    const int b = cli({"attack", "--config", (dir / "r.json").string(), "--out",
                       (dir / "r2").string()});
    CHECK(a == b);
    CHECK(a != kExitError);
    for (const char *f : {"trace.jsonl", "summary.json", "best.json"}) {
      if (!fs::exists(dir / "r1" / f)) {
        continue;
      }
      CHECK(testutil::read_file(dir / "r1" / f) == testutil::read_file(dir / "r2" / f));
    }
    CHECK_FALSE(testutil::read_file(dir / "r1" / "trace.jsonl").empty());
    CHECK(cli({"attack", "--config", (dir / "r.json").string(), "--out",
               (dir / "r3").string(), "--seed", "12"}) != kExitError);
    CHECK(testutil::read_file(dir / "r1" / "trace.jsonl") !=
          testutil::read_file(dir / "r3" / "trace.jsonl"));
  }
  SUBCASE("errors exit 1") {
    auto bad = single_attack(m, 7, dir / "bad");
    write_json_file(dir / "bad.json", bad);
    CHECK(cli({"attack", "--config", (dir / "bad.json").string()}) == kExitError);
    CHECK(cli({"attack", "--config", (dir / "missing.json").string()}) == kExitError);
    CHECK(cli({"frobnicate"}) == kExitError);
  }
  fs::remove_all(dir);
}

TEST_CASE("batch, report and train-ae commands") {
  const auto dir = testutil::temp_dir("cli_batch");
  const fs::path m = make_fixture(dir);
  const std::vector<std::string> args{"batch", "--config", (m / "attack.json").string(),
                                      "--budget", "3000", "--jobs", "2"};
  auto with_out = [&](const std::string &out) {
    auto a = args;
    a.push_back("--out");
    a.push_back((dir / out).string());
    return a;
  };
  const int code = cli(with_out("b1"));
  CHECK(code != kExitError);
  CHECK(cli(with_out("b2")) == code);
  CHECK(fs::exists(dir / "b1" / "attack_000" / "trace.jsonl"));
  CHECK(fs::exists(dir / "b1" / "attack_001" / "summary.json"));
  CHECK(testutil::read_file(dir / "b1" / "batch_summary.json") ==
        testutil::read_file(dir / "b2" / "batch_summary.json"));
  CHECK(testutil::read_file(dir / "b1" / "batch_summary.csv") ==
        testutil::read_file(dir / "b2" / "batch_summary.csv"));

  CHECK(cli({"report", (dir / "b1").string(), "--out", (dir / "table.csv").string()}) ==
        kExitSuccess);
  CHECK(csv_lines(testutil::read_file(dir / "table.csv")).size() == 2);
  CHECK(load_summaries(dir / "b1").size() == 2);

  CHECK(cli({"train-ae", "--synthetic", "60", "--shape", "4x4x1", "--planted-dim", "3",
             "--d-prime", "3", "--epochs", "200", "--out", (dir / "ae").string()}) ==
        kExitSuccess);
  const Decoder ae = load_decoder(dir / "ae" / "decoder.json");
  CHECK(ae.mode() == DecoderMode::linear_ae);
  CHECK(ae.reduced_shape().size() == 3);
  CHECK(fs::exists(dir / "ae" / "manifest.json"));
  CHECK(cli({"train-ae", "--out", (dir / "ae2").string()}) == kExitError);

  CHECK(parse_shape("32x32x3") == Shape{32, 32, 3});
  CHECK(parse_shape("28x28") == Shape{28, 28, 1});
  CHECK_THROWS(parse_shape("32by32"));
  fs::remove_all(dir);
}

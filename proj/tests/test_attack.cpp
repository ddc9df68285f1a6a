#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "zozoom/attack.hpp"

using namespace zozoom;

namespace {

struct Scenario {
  BlackBoxModel model;
  Tensor x0;
  std::size_t top = 0;
};

Scenario smooth_scenario(std::uint64_t seed) {
  const Shape s{8, 8, 1};
  BlackBoxModel model = gen_synthetic_model(seed, s, 3, SyntheticKind::smooth_linear);
  Tensor x0 = gen_smooth_image(seed + 1, s);
  const std::size_t top = argmax(model.share().query(x0));
  return {std::move(model), std::move(x0), top};
}

AttackConfig small_config() {
  AttackConfig cfg;
  cfg.lambda_ini = 1.0;
  cfg.switch_period = 5;
  cfg.query_budget = 3000;
  cfg.learning_rate = 0.02;
  cfg.q_exploit = 4;
  cfg.rng_seed = 42;
  return cfg;
}

std::vector<std::string> lambda_column(const AttackTrace &trace) {
  std::vector<std::string> out;
  std::istringstream in(trace_to_jsonl(trace));
  for (std::string line; std::getline(in, line);) {
    out.push_back(nlohmann::json::parse(line).at("lambda").dump());
  }
  return out;
}

AttackTrace trace_with(std::optional<std::uint64_t> initial_queries, double best_dist,
                       std::optional<std::uint64_t> threshold_queries = std::nullopt) {
  AttackTrace t;
  if (initial_queries) {
    t.initial_success = SuccessPoint{1, *initial_queries, best_dist};
    t.best = BestExample{Tensor(), 1, *initial_queries, best_dist};
  }
  if (threshold_queries) {
    t.threshold_reached = SuccessPoint{2, *threshold_queries, best_dist};
  }
  return t;
}

} // namespace

TEST_CASE("adam examples") {
  AdamState zero(3);
  CHECK(adam_step(zero, std::vector<double>(3, 0.0), 0.002) == std::vector<double>(3, 0.0));
  CHECK(zero.step == 1);

  AdamState one(1);
  const auto d = adam_step(one, std::vector<double>{1.0}, 0.002);
  CHECK(d[0] == doctest::Approx(-0.002 / (1.0 + 1e-8)).epsilon(1e-14));

  AdamState signs(5);
  const std::vector<double> g{3.0, -0.01, 250.0, -7.0, 1e-4};
  const auto s = adam_step(signs, g, 0.1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::signbit(s[i]) != std::signbit(g[i]));
    CHECK(signs.v[i] >= 0.0);
  }

  // Hand-stepped second update.
  AdamState two(1);
  adam_step(two, std::vector<double>{1.0}, 0.01);
  const auto d2 = adam_step(two, std::vector<double>{-2.0}, 0.01);
  const double m = 0.9 * 0.1 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double mh = m / (1.0 - 0.81);
  const double vh = v / (1.0 - 0.999 * 0.999);
  CHECK(d2[0] == doctest::Approx(-0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));

  two.reset();
  CHECK(two.step == 0);
  CHECK(two.m[0] == 0.0);
  CHECK_THROWS_AS(adam_step(two, std::vector<double>{1.0, 2.0}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(adam_step(two, std::vector<double>{std::nan("")}, 0.1),
                  std::invalid_argument);
}

TEST_CASE("update_lambda examples") {
  CHECK(update_lambda(1.0, false) == 10.0);
  CHECK(update_lambda(10.0, true) == 5.0);
  CHECK(update_lambda(update_lambda(0.1, false), false) == doctest::Approx(10.0));
}

TEST_CASE("lambda schedule on synthetic success sequences") {
  SUBCASE("never successful: x10 every period") {
    LambdaSchedule s(1.0, 2);
    std::vector<double> seen;
    s.observe(false, false);
    for (int i = 0; i < 6; ++i) {
      seen.push_back(s.lambda);
      s.observe(false);
    }
    CHECK(seen == std::vector<double>{1, 1, 10, 10, 100, 100});
    CHECK(s.lambda == 1000.0);
  }
  SUBCASE("reset at the initial success, then halving") {
    LambdaSchedule s(1.0, 2);
    const std::vector<bool> success{false, false, false, false, true, false, false,
                                    true, false, false, false};
    std::vector<double> seen;
    std::vector<bool> resets;
    for (bool ok : success) {
      seen.push_back(s.lambda);
      resets.push_back(s.observe(ok));
    }
    CHECK(seen == std::vector<double>{1, 1, 10, 10, 100, 1, 1, 0.5, 0.5, 0.25, 0.25});
    CHECK(s.lambda == 0.125);
    CHECK(resets == std::vector<bool>{false, false, false, false, true, false, false,
                                      false, false, false, false});
  }
  SUBCASE("success at the starting point") {
    LambdaSchedule s(4.0, 3);
    CHECK(s.observe(true, false));
    std::vector<double> seen;
    for (int i = 0; i < 7; ++i) {
      seen.push_back(s.lambda);
      s.observe(i % 2 == 0);
    }
    CHECK(seen == std::vector<double>{4, 4, 4, 2, 2, 2, 1});
  }
  SUBCASE("period one switches every step") {
    LambdaSchedule s(0.5, 1);
    s.observe(false);
    CHECK(s.lambda == 5.0);
    s.observe(true);
    CHECK(s.lambda == 0.5);
    s.observe(false);
    CHECK(s.lambda == 0.25);
  }
}

TEST_CASE("run_attack on a pre-satisfied target") {
  auto sc = smooth_scenario(3);
  AttackConfig cfg = small_config();
  cfg.switch_period = 2;
  cfg.query_budget = 1 + 6 * 5; // record 0 plus six exploit steps at q=4
  const AttackSpec spec{AttackMode::targeted, sc.top, 1.0, sc.x0};
  const auto trace = run_attack(sc.model, Decoder::identity(sc.x0.shape()), spec, cfg);
  REQUIRE(trace.initial_success);
  CHECK(trace.initial_success->queries == 1);
  CHECK(trace.initial_success->per_pixel_distortion == 0.0);
  REQUIRE(trace.best);
  CHECK(trace.best->per_pixel_distortion == 0.0);
  CHECK(trace.best->image == sc.x0);
  CHECK(trace.records.size() == 7);
  CHECK(lambda_column(trace) ==
        std::vector<std::string>{"1.0", "1.0", "1.0", "0.5", "0.5", "0.25", "0.25"});

  cfg.stop_on_success = true;
  const auto stopped = run_attack(sc.model.share(), Decoder::identity(sc.x0.shape()), spec, cfg);
  CHECK(stopped.records.size() == 1);
  CHECK(stopped.total_queries == 1);
}

TEST_CASE("run_attack on an unreachable target grows lambda tenfold") {
  const Shape s{2, 2, 1};
  const auto model = testutil::linear_softmax(s, 3, std::vector<double>(12, 0.0), {0.0, 0.0, -50.0});
  AttackConfig cfg = small_config();
  cfg.switch_period = 3;
  cfg.query_budget = 1 + 2 * 10;
  const auto trace = run_attack(model, Decoder::identity(s),
                                {AttackMode::targeted, 2, 1.0, Tensor::filled(s, 0.5)}, cfg);
  CHECK_FALSE(trace.initial_success);
  CHECK_FALSE(trace.best);
  CHECK(trace.total_queries == 21);
  CHECK(lambda_column(trace) ==
        std::vector<std::string>{"1.0", "1.0", "1.0", "1.0", "10.0", "10.0", "10.0",
                                 "100.0", "100.0", "100.0", "1000.0"});
}

TEST_CASE("budget smaller than one iteration gives an empty trace") {
  auto sc = smooth_scenario(4);
  AttackConfig cfg = small_config();
  cfg.query_budget = 2;
  const auto trace = run_attack(sc.model, Decoder::identity(sc.x0.shape()),
                                {AttackMode::targeted, (sc.top + 1) % 3, 1.0, sc.x0}, cfg);
  CHECK(trace.records.empty());
  CHECK_FALSE(trace.initial_success);
  CHECK(sc.model.query_count() == 0);
}

TEST_CASE("run_attack trace invariants") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    auto sc = smooth_scenario(seed);
    const std::size_t target = (sc.top + 1) % 3;
    for (EstimatorKind kind : {EstimatorKind::random_scaled, EstimatorKind::coordinate_wise}) {
      AttackConfig cfg = small_config();
      cfg.estimator.kind = kind;
      cfg.estimator.coord_batch = 8;
      cfg.query_budget = kind == EstimatorKind::random_scaled ? 3000 : 6000;
      const Decoder dec = Decoder::bilinear({4, 4, 1}, sc.x0.shape());
      const BlackBoxModel model = sc.model.share();
      std::vector<std::uint64_t> counter_at_record;
      const auto trace =
          run_attack(model, dec, {AttackMode::targeted, target, 1.0, sc.x0}, cfg,
                     [&](const IterationRecord &) {
                       counter_at_record.push_back(model.query_count());
                     });
      REQUIRE(trace.initial_success);
      REQUIRE(trace.records.size() == counter_at_record.size());
      CHECK(model.query_count() == trace.total_queries);
      CHECK(trace.total_queries <= cfg.query_budget);

      LambdaSchedule replay(cfg.lambda_ini, cfg.switch_period);
      std::optional<std::size_t> first;
      double best = INFINITY;
      std::uint64_t best_queries = 0;
      for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const auto &r = trace.records[i];
        CHECK(r.queries == counter_at_record[i]);
        CHECK(r.iteration == i);
        if (i > 0) {
          CHECK(r.queries == trace.records[i - 1].queries + r.cost);
          const bool before = !first.has_value();
          CHECK(r.phase == (before ? Phase::explore : Phase::exploit));
          if (kind == EstimatorKind::random_scaled) {
            CHECK(r.q == (before ? 1u : 4u));
            CHECK(r.cost == (before ? 2u : 5u));
          } else {
            CHECK(r.cost == 17u);
          }
        }
        CHECK(r.lambda == replay.lambda);
        replay.observe(r.is_success, i > 0);
        if (r.is_success && !first) {
          first = i;
          CHECK(trace.initial_success->queries == r.queries);
        }
        if (first && *first + 1 == i) {
          CHECK(r.lambda == cfg.lambda_ini); // reset applies from the next iterate
        }
        if (r.is_success && r.per_pixel_distortion < best) {
          best = r.per_pixel_distortion;
          best_queries = r.queries;
        }
      }
      REQUIRE(trace.best);
      CHECK(trace.best->per_pixel_distortion == best);
      CHECK(trace.best->queries == best_queries);
      CHECK(per_pixel_l2(trace.best->image, sc.x0).l2_squared_per_pixel ==
            doctest::Approx(best).epsilon(1e-9));
    }
  }
}

TEST_CASE("run_attack is deterministic") {
  auto sc = smooth_scenario(8);
  const AttackConfig cfg = small_config();
  const AttackSpec spec{AttackMode::untargeted, sc.top, 1.0, sc.x0};
  const Decoder dec = Decoder::bilinear({4, 4, 1}, sc.x0.shape());
  const auto a = run_attack(sc.model.share(), dec, spec, cfg);
  const auto b = run_attack(sc.model.share(), dec, spec, cfg);
  CHECK(trace_to_jsonl(a) == trace_to_jsonl(b));
  AttackConfig other = cfg;
  other.rng_seed = 43;
  CHECK(trace_to_jsonl(run_attack(sc.model.share(), dec, spec, other)) != trace_to_jsonl(a));
}

TEST_CASE("run_attack validates its inputs") {
  auto sc = smooth_scenario(9);
  const AttackSpec spec{AttackMode::targeted, 0, 1.0, sc.x0};
  AttackConfig cfg = small_config();
  CHECK_THROWS_AS(run_attack(sc.model, Decoder::identity({4, 4, 1}), spec, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_attack(sc.model, Decoder::identity(sc.x0.shape()),
                             {AttackMode::targeted, 3, 1.0, sc.x0}, cfg),
                  std::invalid_argument);
  cfg.lambda_ini = 0.0;
  CHECK_THROWS_AS(run_attack(sc.model, Decoder::identity(sc.x0.shape()), spec, cfg),
                  std::invalid_argument);
}

TEST_CASE("batch runs match single runs and summaries") {
  auto sc = smooth_scenario(10);
  const AttackConfig cfg = small_config();
  const Decoder dec = Decoder::bilinear({4, 4, 1}, sc.x0.shape());
  std::vector<AttackInstance> inst;
  for (std::size_t k = 0; k < 3; ++k) {
    inst.push_back({sc.x0, AttackMode::targeted, k});
  }
  const auto traces = run_batch(sc.model, dec, inst, cfg, 2);
  REQUIRE(traces.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    AttackConfig one = cfg;
    one.rng_seed = instance_seed(cfg.rng_seed, i);
    const auto single = run_attack(sc.model.share(), dec,
                                   {AttackMode::targeted, i, 1.0, sc.x0}, one);
    CHECK(trace_to_jsonl(single) == trace_to_jsonl(traces[i]));
  }
  CHECK(sc.model.query_count() == 0);
}

TEST_CASE("summaries") {
  SUBCASE("mean over successes") {
    const std::vector<AttackTrace> t{trace_with(100, 0.001, 150), trace_with(300, 0.01),
                                     trace_with(std::nullopt, 0.0)};
    const auto s = summarize(t, 0.004);
    CHECK(s.attacks == 3);
    CHECK(s.successes == 2);
    CHECK(s.asr == doctest::Approx(2.0 / 3.0));
    CHECK(*s.mean_queries_initial == 200.0);
    CHECK(*s.mean_per_pixel_initial == doctest::Approx(0.0055));
    CHECK(*s.tpr == 0.5);
    CHECK(*s.mean_queries_threshold == 150.0);
  }
  SUBCASE("no successes") {
    const std::vector<AttackTrace> t{trace_with(std::nullopt, 0.0), AttackTrace{}};
    const auto s = summarize(t, 0.004);
    CHECK(s.asr == 0.0);
    CHECK_FALSE(s.mean_queries_initial);
    CHECK_FALSE(s.mean_per_pixel_initial);
    CHECK_FALSE(s.tpr);
    CHECK_FALSE(s.mean_queries_threshold);
  }
  SUBCASE("all pre-satisfied") {
    auto sc = smooth_scenario(11);
    AttackConfig cfg = small_config();
    cfg.query_budget = 50;
    const std::vector<AttackInstance> inst(4, AttackInstance{sc.x0, AttackMode::targeted, sc.top});
    const auto traces = run_batch(sc.model, Decoder::identity(sc.x0.shape()), inst, cfg);
    const auto s = summarize(traces, 0.004);
    CHECK(s.asr == 1.0);
    CHECK(*s.tpr == 1.0);
    CHECK(*s.mean_queries_initial == 1.0);
  }
}

TEST_CASE("query reduction ratio") {
  CHECK(query_reduction_ratio(35737.60, 2428.24) * 100.0 == doctest::Approx(93.21).epsilon(1e-4));
  CHECK(query_reduction_ratio(35737.60, 13324.60) * 100.0 ==
        doctest::Approx(62.72).epsilon(1e-4));
  CHECK(query_reduction_ratio(5.0, 5.0) == 0.0);
  CHECK_THROWS_AS(query_reduction_ratio(0.0, 1.0), std::invalid_argument);
}

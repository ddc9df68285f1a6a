#include "zozoom/bench.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "zozoom/attack.hpp"
#include "zozoom/estimators.hpp"
#include "zozoom/io.hpp"
#include "zozoom/model.hpp"
#include "zozoom/objective.hpp"

namespace zozoom {

std::string to_string(BenchFunction f) {
  switch (f) {
  case BenchFunction::linear:
    return "linear";
  case BenchFunction::quadratic:
    return "quadratic";
  case BenchFunction::softmax_objective:
    return "softmax_objective";
  }
  return "unknown";
}

BenchFunction bench_function_from_string(const std::string &s) {
  if (s == "linear") {
    return BenchFunction::linear;
  }
  if (s == "quadratic") {
    return BenchFunction::quadratic;
  }
  if (s == "softmax_objective" || s == "softmax") {
    return BenchFunction::softmax_objective;
  }
  throw std::invalid_argument("unknown bench function \"" + s + "\"");
}

std::string to_string(BChoice b) {
  switch (b) {
  case BChoice::one:
    return "one";
  case BChoice::equal_q:
    return "q";
  case BChoice::optimal:
    return "optimal";
  case BChoice::half_dim:
    return "half_d";
  case BChoice::full_dim:
    return "d";
  }
  return "unknown";
}

BChoice b_choice_from_string(const std::string &s) {
  if (s == "one" || s == "1") {
    return BChoice::one;
  }
  if (s == "q") {
    return BChoice::equal_q;
  }
  if (s == "optimal") {
    return BChoice::optimal;
  }
  if (s == "half_d") {
    return BChoice::half_dim;
  }
  if (s == "d") {
    return BChoice::full_dim;
  }
  throw std::invalid_argument("unknown b choice \"" + s + "\"");
}

double resolve_b_choice(BChoice b, std::size_t d_prime, std::size_t q) {
  switch (b) {
  case BChoice::one:
    return 1.0;
  case BChoice::equal_q:
    return static_cast<double>(q);
  case BChoice::optimal:
    return optimal_b(d_prime, q);
  case BChoice::half_dim:
    return static_cast<double>(d_prime) / 2.0;
  case BChoice::full_dim:
    return static_cast<double>(d_prime);
  }
  return 1.0;
}

namespace {

struct CellParams {
  BenchFunction function;
  std::size_t d_prime;
  std::size_t q;
  BChoice b_choice;
  double beta;
};

std::vector<CellParams> enumerate_cells(const BenchSpec &spec) {
  std::vector<CellParams> cells;
  for (auto fn : spec.functions) {
    for (auto d : spec.dims) {
      for (auto q : spec.qs) {
        for (auto b : spec.b_choices) {
          for (auto beta : spec.betas) {
            cells.push_back({fn, d, q, b, beta});
          }
        }
      }
    }
  }
  return cells;
}

// Objective with analytic gradient at a fixed point x.
struct CellProblem {
  ScalarObjective f;
  std::vector<double> x;
  std::vector<double> grad;
  double lipschitz = 0.0;
  std::shared_ptr<BlackBoxModel> model;
};

CellProblem make_linear(std::size_t d, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(d);
  std::vector<double> x(d);
  for (auto &v : c) {
    v = normal(rng);
  }
  for (auto &v : x) {
    v = normal(rng);
  }
  CellProblem p;
  p.f = [c](std::span<const double> z) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      acc += c[i] * z[i];
    }
    return acc;
  };
  p.x = std::move(x);
  p.grad = c;
  p.lipschitz = 0.0;
  return p;
}

CellProblem make_quadratic(std::size_t d, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  CellProblem p;
  p.x.resize(d);
  for (auto &v : p.x) {
    v = normal(rng);
  }
  p.f = [](std::span<const double> z) {
    double acc = 0.0;
    for (double v : z) {
      acc += v * v;
    }
    return 0.5 * acc;
  };
  p.grad = p.x;
  p.lipschitz = 1.0;
  return p;
}

// Targeted attack objective on a random linear-softmax model, evaluated
// directly at x (identity decoder, interior point). The biases put the
// target 4 logits below the runner-up so the hinge stays active and its
// argmax stays fixed within radius beta; there f is a quadratic plus a
// linear term, and L = 2 + lambda ||W||_F^2 overestimates its curvature.
CellProblem make_softmax_objective(std::size_t d, double beta, Rng &rng) {
  constexpr std::size_t kClasses = 5;
  constexpr std::size_t kTarget = 0;
  constexpr double kLambda = 1.0;
  const Shape shape{d, 1, 1};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const BlackBoxModel base = gen_synthetic_model(
        rng(), shape, kClasses, SyntheticKind::linear_softmax);
    DenseLayer dense = *linear_softmax_view(base.network())->dense;
    for (std::size_t k = 0; k < kClasses; ++k) {
      dense.bias[k] = k == kTarget ? -3.0 : (k == 1 ? 1.0 : -1.0);
    }
    std::uniform_real_distribution<double> pixel(0.3, 0.7);
    std::uniform_real_distribution<double> offset(-0.05, 0.05);
    Tensor x0(shape);
    Tensor x(shape);
    for (std::size_t i = 0; i < d; ++i) {
      x0[i] = pixel(rng);
      x[i] = x0[i] + offset(rng);
    }
    // Logit margins must exceed the largest logit change within radius beta.
    std::vector<double> logits(kClasses);
    double max_row_diff = 0.0;
    for (std::size_t k = 0; k < kClasses; ++k) {
      double acc = dense.bias[k];
      for (std::size_t i = 0; i < d; ++i) {
        acc += dense.weight[k * d + i] * x[i];
      }
      logits[k] = acc;
      for (std::size_t j = 0; j < kClasses; ++j) {
        double n2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double diff = dense.weight[k * d + i] - dense.weight[j * d + i];
          n2 += diff * diff;
        }
        max_row_diff = std::max(max_row_diff, std::sqrt(n2));
      }
    }
    const double reach = 2.0 * beta * max_row_diff;
    bool separated = logits[1] - logits[kTarget] > reach;
    for (std::size_t k = 2; k < kClasses; ++k) {
      separated = separated && logits[1] - logits[k] > reach;
    }
    if (!separated) {
      continue;
    }
    double frob = 0.0;
    for (double w : dense.weight) {
      frob += w * w;
    }
    auto model = std::make_shared<BlackBoxModel>(
        Network(shape, {FlattenLayer{}, dense, SoftmaxLayer{}}), kClasses);
    AttackSpec spec{AttackMode::targeted, kTarget, kLambda, x0};
    CellProblem p;
    p.grad = analytic_gradient(*model, x, spec).data();
    p.x = x.data();
    p.lipschitz = 2.0 + kLambda * frob;
    p.model = model;
    p.f = [model, spec, shape](std::span<const double> z) {
      const Tensor xt(shape, std::vector<double>(z.begin(), z.end()));
      const auto scores = model->query(xt);
      return squared_l2(z, spec.x0.values()) +
             spec.lambda * targeted_loss(scores, spec.label);
    };
    return p;
  }
  throw std::runtime_error("could not build a separated softmax bench cell");
}

double resolve_beta(double beta, std::size_t d_prime) {
  return beta > 0.0 ? beta : 1.0 / static_cast<double>(d_prime);
}

// The problem (f, x) depends only on (seed, function, d'), so cells that
// differ in q, b or beta are compared on the same objective.
CellProblem make_problem(const BenchSpec &spec, BenchFunction fn, std::size_t d) {
  Rng rng(instance_seed(instance_seed(spec.seed ^ 0x70726f626c656dULL,
                                      static_cast<std::size_t>(fn)),
                        d));
  switch (fn) {
  case BenchFunction::linear:
    return make_linear(d, rng);
  case BenchFunction::quadratic:
    return make_quadratic(d, rng);
  case BenchFunction::softmax_objective: {
    double widest = 0.0;
    for (double b : spec.betas) {
      widest = std::max(widest, resolve_beta(b, d));
    }
    return make_softmax_objective(d, widest, rng);
  }
  }
  throw std::logic_error("unknown bench function");
}

BenchRow run_cell(const BenchSpec &spec, const CellParams &c, std::size_t index) {
  Rng rng(instance_seed(spec.seed, index));
  const double beta = resolve_beta(c.beta, c.d_prime);
  const CellProblem p = make_problem(spec, c.function, c.d_prime);

  BenchRow row;
  row.cell = index;
  row.function = c.function;
  row.d_prime = c.d_prime;
  row.q = c.q;
  row.b_choice = c.b_choice;
  row.b = resolve_b_choice(c.b_choice, c.d_prime, c.q);
  row.beta = beta;
  row.lipschitz = p.lipschitz;
  double g2 = 0.0;
  for (double g : p.grad) {
    g2 += g * g;
  }
  row.grad_norm = std::sqrt(g2);
  row.eta = eta(row.b, c.d_prime, c.q);
  row.bound = theorem1_bound(c.d_prime, c.q, row.b, beta, p.lipschitz, row.grad_norm);

  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::random_scaled;
  cfg.beta = beta;
  cfg.q = c.q;
  cfg.b_policy = BPolicy::fixed(row.b);
  const double fx = p.f(p.x);

  // Welford accumulation of the squared error.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t t = 1; t <= spec.trials; ++t) {
    const auto est = serial::estimate_random(p.f, p.x, cfg, rng, fx);
    const double err = squared_l2(est.vector, p.grad);
    const double delta = err - mean;
    mean += delta / static_cast<double>(t);
    m2 += delta * (err - mean);
  }
  row.empirical_mse = mean;
  if (spec.trials > 1) {
    const double var = m2 / static_cast<double>(spec.trials - 1);
    row.std_error = std::sqrt(var / static_cast<double>(spec.trials));
  }
  row.mse_over_bound = row.bound > 0.0 ? row.empirical_mse / row.bound : 0.0;
  return row;
}

BenchReport run_cells(const BenchSpec &spec, bool parallel) {
  const auto cells = enumerate_cells(spec);
  BenchReport report;
  report.rows.resize(cells.size());
  std::exception_ptr error;
  const auto n = static_cast<std::int64_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      report.rows[i] = run_cell(spec, cells[i], i);
    } catch (...) {
#pragma omp critical(zozoom_bench_error)
      if (!error) {
        error = std::current_exception();
      }
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }
  return report;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

} // namespace

BenchReport run_bench(const BenchSpec &spec) { return run_cells(spec, true); }

namespace serial {
BenchReport run_bench(const BenchSpec &spec) { return run_cells(spec, false); }
} // namespace serial

std::string bench_csv(const BenchReport &report) {
  std::string out =
      "# Estimator MSE vs. the analytic bound, one row per grid cell.\n"
      "# empirical_mse: mean of ||g_bar - grad f(x)||^2 over the trials\n"
      "# std_error: Monte Carlo standard error of empirical_mse\n"
      "# bound: 4 eta(b) ||grad f||^2 + ((2q+1)/q) b^2 beta^2 L^2\n"
      "# eta: b^2/d^2 + b^2/(d q) + (b-d)^2/d^2 with d = d_prime\n"
      "cell,function,d_prime,q,b_choice,b,beta,lipschitz,grad_norm,eta,"
      "empirical_mse,std_error,bound,mse_over_bound\n";
  for (const auto &r : report.rows) {
    out += std::to_string(r.cell) + "," + to_string(r.function) + "," +
           std::to_string(r.d_prime) + "," + std::to_string(r.q) + "," +
           to_string(r.b_choice) + "," + fmt(r.b) + "," + fmt(r.beta) + "," +
           fmt(r.lipschitz) + "," + fmt(r.grad_norm) + "," + fmt(r.eta) + "," +
           fmt(r.empirical_mse) + "," + fmt(r.std_error) + "," + fmt(r.bound) +
           "," + fmt(r.mse_over_bound) + "\n";
  }
  return out;
}

void emit_plot_data(const BenchReport &report, const std::filesystem::path &path) {
  write_text_file(path, bench_csv(report));
}

nlohmann::json bench_spec_to_json(const BenchSpec &spec) {
  nlohmann::json fns = nlohmann::json::array();
  for (auto f : spec.functions) {
    fns.push_back(to_string(f));
  }
  nlohmann::json bs = nlohmann::json::array();
  for (auto b : spec.b_choices) {
    bs.push_back(to_string(b));
  }
  return {{"functions", fns},   {"dims", spec.dims},
          {"qs", spec.qs},      {"b_choices", bs},
          {"betas", spec.betas}, {"trials", spec.trials},
          {"seed", spec.seed}};
}

BenchSpec bench_spec_from_json(const nlohmann::json &j) {
  BenchSpec spec;
  if (j.contains("functions")) {
    spec.functions.clear();
    for (const auto &f : j["functions"]) {
      spec.functions.push_back(bench_function_from_string(f.get<std::string>()));
    }
  }
  if (j.contains("b_choices")) {
    spec.b_choices.clear();
    for (const auto &b : j["b_choices"]) {
      spec.b_choices.push_back(b_choice_from_string(b.get<std::string>()));
    }
  }
  if (j.contains("dims")) {
    spec.dims = j["dims"].get<std::vector<std::size_t>>();
  }
  if (j.contains("qs")) {
    spec.qs = j["qs"].get<std::vector<std::size_t>>();
  }
  if (j.contains("betas")) {
    spec.betas = j["betas"].get<std::vector<double>>();
  }
  spec.trials = j.value("trials", spec.trials);
  spec.seed = j.value("seed", spec.seed);
  if (spec.trials < 1000) {
    throw std::invalid_argument("bench trials must be >= 1000, got " +
                                std::to_string(spec.trials));
  }
  for (auto d : spec.dims) {
    if (d == 0) {
      throw std::invalid_argument("bench dims must be >= 1");
    }
  }
  for (auto q : spec.qs) {
    if (q == 0) {
      throw std::invalid_argument("bench qs must be >= 1");
    }
  }
  return spec;
}

} // namespace zozoom

#include "zozoom/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>

namespace zozoom {

void EstimatorConfig::validate() const {
  if (!(h > 0.0)) {
    throw std::invalid_argument("estimator h must be > 0");
  }
  if (beta && !(*beta > 0.0)) {
    throw std::invalid_argument("estimator beta must be > 0");
  }
  if (q < 1) {
    throw std::invalid_argument("estimator q must be >= 1");
  }
  if (coord_batch < 1) {
    throw std::invalid_argument("coord_batch must be >= 1");
  }
  if (b_policy.kind == BPolicy::Kind::fixed && !(b_policy.value > 0.0)) {
    throw std::invalid_argument("fixed b must be > 0");
  }
}

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::coordinate_wise ? "zoo" : "random";
}

EstimatorKind estimator_kind_from_string(const std::string &s) {
  if (s == "zoo" || s == "coordinate" || s == "coordinate_wise") {
    return EstimatorKind::coordinate_wise;
  }
  if (s == "random" || s == "random_scaled") {
    return EstimatorKind::random_scaled;
  }
  throw std::invalid_argument("unknown estimator \"" + s + "\"");
}

std::vector<double> sample_unit_sphere(std::size_t d, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(d);
  for (;;) {
    double norm2 = 0.0;
    for (double &v : u) {
      v = normal(rng);
      norm2 += v * v;
    }
    if (norm2 > 0.0 && d == 1) {
      u[0] = u[0] > 0.0 ? 1.0 : -1.0;
      return u;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double &v : u) {
        v *= inv;
      }
      return u;
    }
  }
}

double optimal_b(std::size_t d_prime, std::size_t q) {
  const auto d = static_cast<double>(d_prime);
  const auto qq = static_cast<double>(q);
  return d * qq / (2.0 * qq + d);
}

double eta(double b, std::size_t d_prime, std::size_t q) {
  const auto d = static_cast<double>(d_prime);
  const auto qq = static_cast<double>(q);
  return b * b / (d * d) + b * b / (d * qq) + (b - d) * (b - d) / (d * d);
}

double theorem1_bound(std::size_t d_prime, std::size_t q, double b,
                      double beta, double lipschitz, double grad_norm) {
  const auto qq = static_cast<double>(q);
  return 4.0 * eta(b, d_prime, q) * grad_norm * grad_norm +
         (2.0 * qq + 1.0) / qq * b * b * beta * beta * lipschitz * lipschitz;
}

double resolve_b(const BPolicy &policy, std::size_t d_prime, std::size_t q) {
  switch (policy.kind) {
  case BPolicy::Kind::equal_q:
    return static_cast<double>(q);
  case BPolicy::Kind::fixed:
    return policy.value;
  case BPolicy::Kind::optimal:
    return optimal_b(d_prime, q);
  }
  return static_cast<double>(q);
}

double resolve_beta(const EstimatorConfig &cfg, std::size_t d_prime) {
  return cfg.beta ? *cfg.beta : 1.0 / static_cast<double>(d_prime);
}

namespace {

double checked(double v) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("objective returned a non-finite value");
  }
  return v;
}

std::vector<std::size_t> pick_coordinates(std::size_t d, std::size_t batch,
                                          Rng &rng) {
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (batch >= d) {
    return all;
  }
  std::vector<std::size_t> picked;
  picked.reserve(batch);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), batch, rng);
  return picked;
}

std::vector<std::vector<double>> draw_directions(std::size_t d, std::size_t q,
                                                 Rng &rng) {
  std::vector<std::vector<double>> dirs;
  dirs.reserve(q);
  for (std::size_t j = 0; j < q; ++j) {
    dirs.push_back(sample_unit_sphere(d, rng));
  }
  return dirs;
}

// Evaluates f at points produced by make_point(k) for k in [0, n), possibly
// in parallel. Results are stored by index so the caller can reduce in a
// fixed order.
template <class MakePoint>
std::vector<double> evaluate_points(const ScalarObjective &f, std::size_t n,
                                    std::size_t dim, MakePoint make_point,
                                    bool parallel) {
  std::vector<double> out(n);
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel if (parallel && n > 1)
  {
    std::vector<double> point(dim);
#pragma omp for schedule(static)
    for (std::int64_t k = 0; k < count; ++k) {
      try {
        make_point(static_cast<std::size_t>(k), point);
        out[static_cast<std::size_t>(k)] = checked(f(point));
      } catch (...) {
#pragma omp critical(zozoom_estimator_error)
        if (!error) {
          error = std::current_exception();
        }
      }
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }
  return out;
}

GradientEstimate coordinate_impl(const ScalarObjective &f,
                                 std::span<const double> x,
                                 const EstimatorConfig &cfg, Rng &rng,
                                 bool parallel) {
  cfg.validate();
  const std::size_t d = x.size();
  const auto coords = pick_coordinates(d, cfg.coord_batch, rng);
  // Point 2k is x + h e_i, point 2k+1 is x - h e_i, for i = coords[k].
  const auto values = evaluate_points(
      f, 2 * coords.size(), d,
      [&](std::size_t k, std::vector<double> &p) {
        std::copy(x.begin(), x.end(), p.begin());
        const std::size_t i = coords[k / 2];
        p[i] += (k % 2 == 0) ? cfg.h : -cfg.h;
      },
      parallel);
  GradientEstimate est{std::vector<double>(d, 0.0), 2 * coords.size()};
  for (std::size_t k = 0; k < coords.size(); ++k) {
    est.vector[coords[k]] = (values[2 * k] - values[2 * k + 1]) / (2.0 * cfg.h);
  }
  return est;
}

GradientEstimate random_impl(const ScalarObjective &f, std::span<const double> x,
                             double b, double beta,
                             const std::vector<std::vector<double>> &dirs,
                             std::optional<double> f_at_x, bool parallel) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("beta must be > 0");
  }
  if (dirs.empty()) {
    throw std::invalid_argument("need at least one direction");
  }
  const std::size_t d = x.size();
  GradientEstimate est{std::vector<double>(d, 0.0), 0};
  double fx = 0.0;
  if (f_at_x) {
    fx = checked(*f_at_x);
  } else {
    fx = checked(f(x));
    est.queries_used += 1;
  }
  const auto values = evaluate_points(
      f, dirs.size(), d,
      [&](std::size_t j, std::vector<double> &p) {
        const auto &u = dirs[j];
        if (u.size() != d) {
          throw std::invalid_argument("direction length does not match x");
        }
        for (std::size_t i = 0; i < d; ++i) {
          p[i] = x[i] + beta * u[i];
        }
      },
      parallel);
  est.queries_used += dirs.size();
  const double scale = b / (beta * static_cast<double>(dirs.size()));
  for (std::size_t j = 0; j < dirs.size(); ++j) {
    const double w = scale * (values[j] - fx);
    for (std::size_t i = 0; i < d; ++i) {
      est.vector[i] += w * dirs[j][i];
    }
  }
  return est;
}

GradientEstimate random_sampled(const ScalarObjective &f,
                                std::span<const double> x,
                                const EstimatorConfig &cfg, Rng &rng,
                                std::optional<double> f_at_x, bool parallel) {
  cfg.validate();
  const std::size_t d = x.size();
  const auto dirs = draw_directions(d, cfg.q, rng);
  return random_impl(f, x, resolve_b(cfg.b_policy, d, cfg.q),
                     resolve_beta(cfg, d), dirs, f_at_x, parallel);
}

} // namespace

GradientEstimate estimate_coordinate(const ScalarObjective &f,
                                     std::span<const double> x,
                                     const EstimatorConfig &cfg, Rng &rng) {
  return coordinate_impl(f, x, cfg, rng, true);
}

GradientEstimate estimate_random(const ScalarObjective &f,
                                 std::span<const double> x,
                                 const EstimatorConfig &cfg, Rng &rng,
                                 std::optional<double> f_at_x) {
  return random_sampled(f, x, cfg, rng, f_at_x, true);
}

GradientEstimate
estimate_random_with_directions(const ScalarObjective &f,
                                std::span<const double> x, double b, double beta,
                                const std::vector<std::vector<double>> &directions,
                                std::optional<double> f_at_x) {
  return random_impl(f, x, b, beta, directions, f_at_x, true);
}

GradientEstimate estimate(const ScalarObjective &f, std::span<const double> x,
                          const EstimatorConfig &cfg, Rng &rng,
                          std::optional<double> f_at_x) {
  if (cfg.kind == EstimatorKind::coordinate_wise) {
    return estimate_coordinate(f, x, cfg, rng);
  }
  return estimate_random(f, x, cfg, rng, f_at_x);
}

namespace serial {

GradientEstimate estimate_coordinate(const ScalarObjective &f,
                                     std::span<const double> x,
                                     const EstimatorConfig &cfg, Rng &rng) {
  return coordinate_impl(f, x, cfg, rng, false);
}

GradientEstimate estimate_random(const ScalarObjective &f,
                                 std::span<const double> x,
                                 const EstimatorConfig &cfg, Rng &rng,
                                 std::optional<double> f_at_x) {
  return random_sampled(f, x, cfg, rng, f_at_x, false);
}

} // namespace serial

} // namespace zozoom

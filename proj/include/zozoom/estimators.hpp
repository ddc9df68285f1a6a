#ifndef ZOZOOM_ESTIMATORS_HPP
#define ZOZOOM_ESTIMATORS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace zozoom {

using Rng = std::mt19937_64;

/// Scalar objective over the optimization variable. Each call is one model
/// query. Must be safe to call concurrently.
using ScalarObjective = std::function<double(std::span<const double>)>;

enum class EstimatorKind { coordinate_wise, random_scaled };

/// How the scaling parameter b of the random estimator is chosen.
struct BPolicy {
  enum class Kind { equal_q, fixed, optimal };
  Kind kind = Kind::equal_q;
  double value = 0.0; // only for Kind::fixed

  static BPolicy equal_q() { return {Kind::equal_q, 0.0}; }
  static BPolicy fixed(double b) { return {Kind::fixed, b}; }
  static BPolicy optimal() { return {Kind::optimal, 0.0}; }
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::random_scaled;
  double h = 1e-4;            // coordinate half-step
  std::optional<double> beta; // smoothing radius; unset means 1/d'
  BPolicy b_policy = BPolicy::equal_q();
  std::size_t q = 1;
  std::size_t coord_batch = 128;

  void validate() const;
};

struct GradientEstimate {
  std::vector<double> vector;
  std::uint64_t queries_used = 0;
};

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string &s);

/// Uniform direction on the unit sphere in R^d (normalized Gaussian; an
/// all-zero draw is rejected).
std::vector<double> sample_unit_sphere(std::size_t d, Rng &rng);

/// b* = d' q / (2q + d'), the minimizer of eta(b).
double optimal_b(std::size_t d_prime, std::size_t q);

/// eta(b) = b^2/d'^2 + b^2/(d' q) + (b - d')^2/d'^2.
double eta(double b, std::size_t d_prime, std::size_t q);

/// Upper bound on E||g_bar - grad f||^2 for the q-averaged estimator:
/// 4 eta(b) ||grad f||^2 + ((2q+1)/q) b^2 beta^2 L^2.
double theorem1_bound(std::size_t d_prime, std::size_t q, double b,
                      double beta, double lipschitz, double grad_norm);

double resolve_b(const BPolicy &policy, std::size_t d_prime, std::size_t q);
double resolve_beta(const EstimatorConfig &cfg, std::size_t d_prime);

/// Symmetric difference quotients on a random batch of coordinates
/// (without replacement; all coordinates if coord_batch >= d'). Unselected
/// coordinates are zero. Costs 2 queries per selected coordinate.
GradientEstimate estimate_coordinate(const ScalarObjective &f,
                                     std::span<const double> x,
                                     const EstimatorConfig &cfg, Rng &rng);

/// q-direction averaged random estimator
///   g_bar = (1/q) sum_j b (f(x + beta u_j) - f(x)) / beta * u_j.
/// Directions are drawn sequentially from `rng` before any evaluation.
/// If `f_at_x` is supplied it is used as f(x) and not re-queried, so the
/// cost is q instead of q + 1.
GradientEstimate estimate_random(const ScalarObjective &f,
                                 std::span<const double> x,
                                 const EstimatorConfig &cfg, Rng &rng,
                                 std::optional<double> f_at_x = std::nullopt);

/// Same estimator with caller-provided unit directions.
GradientEstimate
estimate_random_with_directions(const ScalarObjective &f,
                                std::span<const double> x, double b, double beta,
                                const std::vector<std::vector<double>> &directions,
                                std::optional<double> f_at_x = std::nullopt);

/// Dispatches on cfg.kind.
GradientEstimate estimate(const ScalarObjective &f, std::span<const double> x,
                          const EstimatorConfig &cfg, Rng &rng,
                          std::optional<double> f_at_x = std::nullopt);

// Single-threaded references, bit-identical to the OpenMP versions above.
namespace serial {
GradientEstimate estimate_coordinate(const ScalarObjective &f,
                                     std::span<const double> x,
                                     const EstimatorConfig &cfg, Rng &rng);
GradientEstimate estimate_random(const ScalarObjective &f,
                                 std::span<const double> x,
                                 const EstimatorConfig &cfg, Rng &rng,
                                 std::optional<double> f_at_x = std::nullopt);
} // namespace serial

} // namespace zozoom

#endif // ZOZOOM_ESTIMATORS_HPP

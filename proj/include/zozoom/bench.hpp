#ifndef ZOZOOM_BENCH_HPP
#define ZOZOOM_BENCH_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace zozoom {

// Monte Carlo check of the averaged random estimator against its
// mean-squared-error bound, on functions with known gradients and
// Lipschitz constants.

enum class BenchFunction { linear, quadratic, softmax_objective };
std::string to_string(BenchFunction f);
BenchFunction bench_function_from_string(const std::string &s);

/// Choice of b relative to the cell's (d', q).
enum class BChoice { one, equal_q, optimal, half_dim, full_dim };
std::string to_string(BChoice b);
BChoice b_choice_from_string(const std::string &s);
double resolve_b_choice(BChoice b, std::size_t d_prime, std::size_t q);

/// beta <= 0 means 1/d'.
struct BenchSpec {
  std::vector<BenchFunction> functions{BenchFunction::linear,
                                       BenchFunction::quadratic,
                                       BenchFunction::softmax_objective};
  std::vector<std::size_t> dims{8, 64};
  std::vector<std::size_t> qs{1, 4, 16};
  std::vector<BChoice> b_choices{BChoice::one, BChoice::equal_q,
                                 BChoice::optimal, BChoice::half_dim};
  std::vector<double> betas{0.0, 0.01};
  std::size_t trials = 10000;
  std::uint64_t seed = 0;

  std::size_t cell_count() const {
    return functions.size() * dims.size() * qs.size() * b_choices.size() *
           betas.size();
  }
};

struct BenchRow {
  std::size_t cell = 0;
  BenchFunction function = BenchFunction::linear;
  std::size_t d_prime = 0;
  std::size_t q = 0;
  BChoice b_choice = BChoice::one;
  double b = 0.0;
  double beta = 0.0;
  double lipschitz = 0.0;
  double grad_norm = 0.0;
  double eta = 0.0;
  double empirical_mse = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  double mse_over_bound = 0.0;

  /// Bound respected within three Monte Carlo standard errors.
  bool within_bound() const {
    return empirical_mse <= bound + 3.0 * std_error;
  }
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

/// Cells are independent; cell i draws from its own stream seeded by
/// (seed, i), so serial and parallel runs produce identical reports.
BenchReport run_bench(const BenchSpec &spec);

namespace serial {
BenchReport run_bench(const BenchSpec &spec);
}

/// CSV with '#' comment lines describing the columns, then a header row and
/// one row per cell.
std::string bench_csv(const BenchReport &report);
void emit_plot_data(const BenchReport &report, const std::filesystem::path &path);

nlohmann::json bench_spec_to_json(const BenchSpec &spec);
BenchSpec bench_spec_from_json(const nlohmann::json &j);

} // namespace zozoom

#endif // ZOZOOM_BENCH_HPP

#ifndef ZOZOOM_ATTACK_HPP
#define ZOZOOM_ATTACK_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "zozoom/decoder.hpp"
#include "zozoom/estimators.hpp"
#include "zozoom/model.hpp"
#include "zozoom/objective.hpp"

namespace zozoom {

struct AttackConfig {
  double lambda_ini = 10.0;
  std::size_t switch_period = 100; // S
  std::uint64_t query_budget = 10000; // Q
  double learning_rate = 2e-3;
  std::size_t q_explore = 1;
  std::size_t q_exploit = 4;
  EstimatorConfig estimator;
  double distortion_threshold = 0.004; // per-pixel, ||delta||^2 / d
  std::uint64_t rng_seed = 0;
  bool stop_on_success = false; // end the run at the initial success

  void validate() const;
};

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
  void reset();
};

/// One bias-corrected ADAM update. Returns the increment to add to the
/// variable: -lr * m_hat / (sqrt(v_hat) + eps).
std::vector<double> adam_step(AdamState &state, std::span<const double> gradient,
                              double lr);

/// Dynamic switching: x10 while the attack has never succeeded, /2 after.
double update_lambda(double lambda, bool ever_succeeded);

/// Lambda bookkeeping of the attack loop. Feed it the success flag of every
/// evaluated iterate in order; `lambda` is the value to use for the next
/// evaluation. The starting point (delta' = 0) is observed with
/// after_step = false and does not count towards the switch period.
struct LambdaSchedule {
  double lambda_ini;
  std::size_t period;
  double lambda;
  bool ever_succeeded = false;
  std::size_t since_reset = 0;

  LambdaSchedule(double lambda_ini, std::size_t period)
      : lambda_ini(lambda_ini), period(period), lambda(lambda_ini) {}

  /// Returns true at the initial success, when lambda is reset to
  /// lambda_ini and the caller must reset its optimizer.
  bool observe(bool is_success, bool after_step = true);
};

enum class Phase { explore, exploit };
std::string to_string(Phase phase);

/// One evaluated iterate. Record 0 is the starting point delta' = 0;
/// record k >= 1 is the iterate produced by the k-th gradient step.
struct IterationRecord {
  std::size_t iteration = 0;
  std::uint64_t queries = 0; // cumulative, including this evaluation
  double total = 0.0;
  double dist_term = 0.0;
  double loss_term = 0.0;
  double lambda = 0.0; // lambda in force when the record was evaluated
  Phase phase = Phase::explore;
  std::size_t q = 0; // directions used by the step (0 for record 0 / zoo)
  std::uint64_t cost = 0; // queries spent by this record's iteration
  double per_pixel_distortion = 0.0;
  bool is_success = false;
};

struct SuccessPoint {
  std::size_t iteration = 0;
  std::uint64_t queries = 0;
  double per_pixel_distortion = 0.0;
};

struct BestExample {
  Tensor image;
  std::size_t iteration = 0;
  std::uint64_t queries = 0;
  double per_pixel_distortion = 0.0;
};

struct AttackTrace {
  std::vector<IterationRecord> records;
  std::optional<SuccessPoint> initial_success;
  std::optional<SuccessPoint> threshold_reached; // first success with dist <= l
  std::optional<BestExample> best;
  std::uint64_t total_queries = 0;
};

using RecordObserver = std::function<void(const IterationRecord &)>;

/// Zeroth-order attack over delta' (starting at zero). Explores with
/// q_explore directions until the first successful iterate, then resets
/// lambda and ADAM and refines with q_exploit directions. Lambda is
/// switched every S iterations counted from the last reset. Stops once the
/// cumulative query count reaches the budget. `spec.lambda` is ignored;
/// lambda starts at config.lambda_ini.
AttackTrace run_attack(const BlackBoxModel &model, const Decoder &decoder,
                       const AttackSpec &spec, const AttackConfig &config,
                       const RecordObserver &observer = {});

struct AttackInstance {
  Tensor x0;
  AttackMode mode = AttackMode::targeted;
  std::size_t label = 0;
};

/// Aggregates over attacks. Means are over successful attacks only and
/// absent when there are none.
struct BatchSummary {
  std::size_t attacks = 0;
  std::size_t successes = 0;
  double asr = 0.0;
  std::optional<double> mean_queries_initial;
  std::optional<double> mean_per_pixel_initial;
  std::optional<double> tpr;
  std::optional<double> mean_queries_threshold;
};

/// Per-attack seed derived from (base seed, index).
std::uint64_t instance_seed(std::uint64_t base, std::size_t index);

/// Runs independent attacks, up to `jobs` at a time. Each attack gets its
/// own query counter (model.share()) and the seed instance_seed(seed, i).
std::vector<AttackTrace> run_batch(const BlackBoxModel &model,
                                   const Decoder &decoder,
                                   std::span<const AttackInstance> instances,
                                   const AttackConfig &config, int jobs = 1);

BatchSummary summarize(std::span<const AttackTrace> traces,
                       double distortion_threshold);

/// 1 - method_mean / baseline_mean.
double query_reduction_ratio(double baseline_mean, double method_mean);

// Serialization.
nlohmann::json record_to_json(const IterationRecord &r);
std::string trace_to_jsonl(const AttackTrace &trace);

} // namespace zozoom

#endif // ZOZOOM_ATTACK_HPP

#include "zozoom/attack.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

namespace zozoom {

void AttackConfig::validate() const {
  if (!(lambda_ini > 0.0)) {
    throw std::invalid_argument("lambda_ini must be > 0");
  }
  if (switch_period == 0) {
    throw std::invalid_argument("switch_period must be > 0");
  }
  if (query_budget == 0) {
    throw std::invalid_argument("query_budget must be > 0");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be > 0");
  }
  if (q_explore < 1 || q_exploit < 1) {
    throw std::invalid_argument("q_explore and q_exploit must be >= 1");
  }
  if (!(distortion_threshold >= 0.0)) {
    throw std::invalid_argument("distortion_threshold must be >= 0");
  }
  estimator.validate();
}

void AdamState::reset() {
  std::fill(m.begin(), m.end(), 0.0);
  std::fill(v.begin(), v.end(), 0.0);
  step = 0;
}

std::vector<double> adam_step(AdamState &state, std::span<const double> gradient,
                              double lr) {
  if (gradient.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: gradient has length " +
                                std::to_string(gradient.size()) + ", expected " +
                                std::to_string(state.m.size()));
  }
  for (double g : gradient) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("adam_step: non-finite gradient");
    }
  }
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::beta1, t);
  const double c2 = 1.0 - std::pow(AdamState::beta2, t);
  std::vector<double> delta(gradient.size());
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = AdamState::beta1 * state.m[i] + (1.0 - AdamState::beta1) * g;
    state.v[i] = AdamState::beta2 * state.v[i] + (1.0 - AdamState::beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    delta[i] = -lr * m_hat / (std::sqrt(v_hat) + AdamState::epsilon);
  }
  return delta;
}

double update_lambda(double lambda, bool ever_succeeded) {
  return ever_succeeded ? lambda / 2.0 : lambda * 10.0;
}

bool LambdaSchedule::observe(bool is_success, bool after_step) {
  if (is_success && !ever_succeeded) {
    ever_succeeded = true;
    lambda = lambda_ini;
    since_reset = 0;
    return true;
  }
  if (after_step && ++since_reset % period == 0) {
    lambda = update_lambda(lambda, ever_succeeded);
  }
  return false;
}

std::string to_string(Phase phase) {
  return phase == Phase::explore ? "explore" : "exploit";
}

namespace {

std::uint64_t iteration_cost(const EstimatorConfig &est, std::size_t q,
                             std::size_t dim) {
  if (est.kind == EstimatorKind::coordinate_wise) {
    return 2 * std::min(est.coord_batch, dim) + 1;
  }
  return q + 1;
}

} // namespace

AttackTrace run_attack(const BlackBoxModel &model, const Decoder &decoder,
                       const AttackSpec &spec, const AttackConfig &config,
                       const RecordObserver &observer) {
  config.validate();
  if (decoder.full_shape() != spec.x0.shape() ||
      model.info().input_shape != spec.x0.shape()) {
    throw std::invalid_argument("image, decoder output and model input shapes differ");
  }
  if (spec.label >= model.info().num_classes) {
    throw std::invalid_argument("attack class " + std::to_string(spec.label) +
                                " out of range");
  }

  const Shape reduced = decoder.reduced_shape();
  const std::size_t dim = reduced.size();
  const auto d_full = static_cast<double>(spec.x0.size());

  AttackTrace trace;
  if (config.query_budget < 1 + iteration_cost(config.estimator, config.q_explore, dim)) {
    return trace;
  }

  AttackSpec s = spec;
  LambdaSchedule schedule(config.lambda_ini, config.switch_period);
  s.lambda = schedule.lambda;
  Rng rng(config.rng_seed);
  AdamState adam(dim);
  Tensor delta(reduced);
  std::uint64_t queries = 0;

  auto check_finite = [](const ObjectiveValue &v, std::size_t iteration) {
    if (!std::isfinite(v.total)) {
      throw std::runtime_error("non-finite objective at iteration " +
                               std::to_string(iteration) + " (dist " +
                               std::to_string(v.dist_term) + ", loss " +
                               std::to_string(v.loss_term) + ")");
    }
  };

  // Appends a record for the freshly evaluated iterate and handles success.
  auto commit = [&](const ObjectiveValue &v, std::size_t iteration, Phase phase,
                    std::size_t q, std::uint64_t cost) {
    const bool first_success = schedule.observe(v.is_success, iteration > 0);
    IterationRecord r;
    r.iteration = iteration;
    r.queries = queries;
    r.total = v.total;
    r.dist_term = v.dist_term;
    r.loss_term = v.loss_term;
    r.lambda = s.lambda;
    r.phase = phase;
    r.q = q;
    r.cost = cost;
    r.per_pixel_distortion = v.dist_term / d_full;
    r.is_success = v.is_success;
    trace.records.push_back(r);
    trace.total_queries = queries;
    if (observer) {
      observer(r);
    }
    if (first_success) {
      trace.initial_success = SuccessPoint{iteration, queries, r.per_pixel_distortion};
      adam.reset();
    }
    s.lambda = schedule.lambda;
    if (!v.is_success) {
      return;
    }
    const SuccessPoint point{iteration, queries, r.per_pixel_distortion};
    if (!trace.best || r.per_pixel_distortion < trace.best->per_pixel_distortion) {
      trace.best = BestExample{perturbed_image(s, decoder, delta), iteration,
                               queries, r.per_pixel_distortion};
    }
    if (!trace.threshold_reached &&
        r.per_pixel_distortion <= config.distortion_threshold) {
      trace.threshold_reached = point;
    }
  };

  ObjectiveValue current = evaluate(s, model, decoder, delta);
  queries = 1;
  check_finite(current, 0);
  commit(current, 0, Phase::explore, 0, 1);

  const ScalarObjective f = [&](std::span<const double> point) {
    return evaluate(s, model, decoder,
                    Tensor(reduced, std::vector<double>(point.begin(), point.end())))
        .total;
  };

  for (std::size_t iteration = 1; !(schedule.ever_succeeded && config.stop_on_success);
       ++iteration) {
    const bool succeeded = schedule.ever_succeeded;
    const Phase phase = succeeded ? Phase::exploit : Phase::explore;
    EstimatorConfig est_cfg = config.estimator;
    est_cfg.q = succeeded ? config.q_exploit : config.q_explore;
    const bool random = est_cfg.kind == EstimatorKind::random_scaled;
    if (queries + iteration_cost(est_cfg, est_cfg.q, dim) > config.query_budget) {
      break;
    }

    // Lambda may have changed since `current` was scored; no query needed.
    const double base = current.dist_term + s.lambda * current.loss_term;
    const GradientEstimate g =
        estimate(f, delta.values(), est_cfg, rng,
                 random ? std::optional<double>(base) : std::nullopt);

    const auto step = adam_step(adam, g.vector, config.learning_rate);
    for (std::size_t i = 0; i < dim; ++i) {
      delta[i] += step[i];
    }

    current = evaluate(s, model, decoder, delta);
    const std::uint64_t cost = g.queries_used + 1;
    queries += cost;
    check_finite(current, iteration);
    commit(current, iteration, phase, random ? est_cfg.q : 0, cost);
  }
  return trace;
}

std::uint64_t instance_seed(std::uint64_t base, std::size_t index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<AttackTrace> run_batch(const BlackBoxModel &model,
                                   const Decoder &decoder,
                                   std::span<const AttackInstance> instances,
                                   const AttackConfig &config, int jobs) {
  std::vector<AttackTrace> traces(instances.size());
  std::exception_ptr error;
  const auto n = static_cast<std::int64_t>(instances.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs > 0 ? jobs : 1)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      const BlackBoxModel own = model.share();
      AttackConfig cfg = config;
      cfg.rng_seed = instance_seed(config.rng_seed, i);
      const AttackSpec spec{instances[i].mode, instances[i].label,
                            config.lambda_ini, instances[i].x0};
      traces[i] = run_attack(own, decoder, spec, cfg);
    } catch (...) {
#pragma omp critical(zozoom_batch_error)
      if (!error) {
        error = std::current_exception();
      }
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }
  return traces;
}

BatchSummary summarize(std::span<const AttackTrace> traces,
                       double distortion_threshold) {
  BatchSummary s;
  s.attacks = traces.size();
  double q_sum = 0.0;
  double dist_sum = 0.0;
  double thr_sum = 0.0;
  std::size_t thr_count = 0;
  std::size_t within = 0;
  for (const auto &t : traces) {
    if (!t.initial_success) {
      continue;
    }
    ++s.successes;
    q_sum += static_cast<double>(t.initial_success->queries);
    dist_sum += t.initial_success->per_pixel_distortion;
    if (t.best && t.best->per_pixel_distortion <= distortion_threshold) {
      ++within;
    }
    if (t.threshold_reached) {
      thr_sum += static_cast<double>(t.threshold_reached->queries);
      ++thr_count;
    }
  }
  if (s.attacks > 0) {
    s.asr = static_cast<double>(s.successes) / static_cast<double>(s.attacks);
  }
  if (s.successes > 0) {
    const auto n = static_cast<double>(s.successes);
    s.mean_queries_initial = q_sum / n;
    s.mean_per_pixel_initial = dist_sum / n;
    s.tpr = static_cast<double>(within) / n;
  }
  if (thr_count > 0) {
    s.mean_queries_threshold = thr_sum / static_cast<double>(thr_count);
  }
  return s;
}

double query_reduction_ratio(double baseline_mean, double method_mean) {
  if (!(baseline_mean > 0.0)) {
    throw std::invalid_argument("baseline mean must be > 0");
  }
  return 1.0 - method_mean / baseline_mean;
}

nlohmann::json record_to_json(const IterationRecord &r) {
  return {{"iteration", r.iteration},
          {"queries", r.queries},
          {"phase", to_string(r.phase)},
          {"q", r.q},
          {"cost", r.cost},
          {"lambda", r.lambda},
          {"total", r.total},
          {"dist_term", r.dist_term},
          {"loss_term", r.loss_term},
          {"per_pixel_distortion", r.per_pixel_distortion},
          {"is_success", r.is_success}};
}

std::string trace_to_jsonl(const AttackTrace &trace) {
  std::string out;
  for (const auto &r : trace.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

} // namespace zozoom

#include "zozoom/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zozoom {

std::string to_string(AttackMode mode) {
  return mode == AttackMode::targeted ? "targeted" : "untargeted";
}

AttackMode attack_mode_from_string(const std::string &s) {
  if (s == "targeted") {
    return AttackMode::targeted;
  }
  if (s == "untargeted") {
    return AttackMode::untargeted;
  }
  throw std::invalid_argument("unknown attack mode \"" + s + "\"");
}

namespace {

double safe_log(double s) { return std::log(std::max(s, kProbabilityFloor)); }

void check_scores(std::span<const double> scores, std::size_t label) {
  if (scores.size() < 2) {
    throw std::invalid_argument("loss needs at least 2 classes");
  }
  if (label >= scores.size()) {
    throw std::invalid_argument("class index " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(scores.size()) + " classes");
  }
}

// Largest log-score over classes other than `skip`, lowest index on ties.
std::size_t best_other(std::span<const double> scores, std::size_t skip) {
  std::size_t best = skip == 0 ? 1 : 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != skip && safe_log(scores[j]) > safe_log(scores[best])) {
      best = j;
    }
  }
  return best;
}

} // namespace

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) {
    throw std::invalid_argument("argmax of empty score vector");
  }
  return static_cast<std::size_t>(
      std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double targeted_loss(std::span<const double> scores, std::size_t target) {
  check_scores(scores, target);
  const std::size_t j = best_other(scores, target);
  return std::max(safe_log(scores[j]) - safe_log(scores[target]), 0.0);
}

double untargeted_loss(std::span<const double> scores, std::size_t original) {
  check_scores(scores, original);
  const std::size_t j = best_other(scores, original);
  return std::max(safe_log(scores[original]) - safe_log(scores[j]), 0.0);
}

double attack_loss(const AttackSpec &spec, std::span<const double> scores) {
  return spec.mode == AttackMode::targeted ? targeted_loss(scores, spec.label)
                                           : untargeted_loss(scores, spec.label);
}

bool attack_succeeded(const AttackSpec &spec, std::span<const double> scores) {
  const std::size_t top = argmax(scores);
  return spec.mode == AttackMode::targeted ? top == spec.label
                                           : top != spec.label;
}

Tensor perturbed_image(const AttackSpec &spec, const Decoder &decoder,
                       const Tensor &delta_prime) {
  Tensor x = decoder.decode(delta_prime);
  if (x.shape() != spec.x0.shape()) {
    throw std::invalid_argument("decoder output " + x.shape().to_string() +
                                " != image shape " + spec.x0.shape().to_string());
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::clamp(spec.x0[i] + x[i], 0.0, 1.0);
  }
  return x;
}

ObjectiveValue evaluate(const AttackSpec &spec, const BlackBoxModel &model,
                        const Decoder &decoder, const Tensor &delta_prime) {
  const Tensor x = perturbed_image(spec, decoder, delta_prime);
  ObjectiveValue v;
  v.scores = model.query(x);
  v.dist_term = squared_l2(x.values(), spec.x0.values());
  v.loss_term = attack_loss(spec, v.scores);
  v.total = v.dist_term + spec.lambda * v.loss_term;
  v.top_class = argmax(v.scores);
  v.is_success = attack_succeeded(spec, v.scores);
  return v;
}

Tensor analytic_gradient(const BlackBoxModel &model, const Tensor &x,
                         const AttackSpec &spec) {
  const auto view = linear_softmax_view(model.network());
  if (!view) {
    throw std::invalid_argument(
        "analytic_gradient needs a linear-softmax model (flatten, dense, softmax)");
  }
  if (x.shape() != spec.x0.shape() || x.shape() != model.info().input_shape) {
    throw std::invalid_argument("analytic_gradient: shape mismatch");
  }
  const DenseLayer &w = *view->dense;
  const std::size_t d = x.size();
  const std::size_t k = w.rows;

  std::vector<double> logits(k);
  for (std::size_t r = 0; r < k; ++r) {
    double acc = w.bias[r];
    for (std::size_t c = 0; c < d; ++c) {
      acc += w.weight[r * d + c] * x[c];
    }
    logits[r] = acc;
  }
  const auto s = softmax(logits);

  Tensor grad(x.shape());
  for (std::size_t i = 0; i < d; ++i) {
    grad[i] = 2.0 * (x[i] - spec.x0[i]);
  }

  const double loss = attack_loss(spec, s);
  if (loss <= 0.0) {
    return grad;
  }
  const std::size_t other = best_other(s, spec.label);
  const std::size_t plus = spec.mode == AttackMode::targeted ? other : spec.label;
  const std::size_t minus = spec.mode == AttackMode::targeted ? spec.label : other;

  // d log s_j / dx = W_j - sum_k s_k W_k, zero where the floor is active.
  auto add_log_grad = [&](std::size_t j, double sign) {
    if (s[j] <= kProbabilityFloor) {
      return;
    }
    for (std::size_t i = 0; i < d; ++i) {
      double mean = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        mean += s[r] * w.weight[r * d + i];
      }
      grad[i] += sign * spec.lambda * (w.weight[j * d + i] - mean);
    }
  };
  add_log_grad(plus, 1.0);
  add_log_grad(minus, -1.0);
  return grad;
}

} // namespace zozoom

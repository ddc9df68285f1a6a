#ifndef ZOZOOM_OBJECTIVE_HPP
#define ZOZOOM_OBJECTIVE_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "zozoom/decoder.hpp"
#include "zozoom/model.hpp"
#include "zozoom/tensor.hpp"

namespace zozoom {

enum class AttackMode { targeted, untargeted };

std::string to_string(AttackMode mode);
AttackMode attack_mode_from_string(const std::string &s);

/// What is being attacked. For targeted attacks `label` is the target
/// class t; for untargeted ones it is the original top-1 class t0.
struct AttackSpec {
  AttackMode mode = AttackMode::targeted;
  std::size_t label = 0;
  double lambda = 1.0;
  Tensor x0;
};

struct ObjectiveValue {
  double total = 0.0;
  double dist_term = 0.0; // ||clip(x0 + D(delta')) - x0||_2^2
  double loss_term = 0.0;
  std::vector<double> scores;
  std::size_t top_class = 0;
  bool is_success = false;
};

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores);

/// max{ max_{j != t} log s_j - log s_t, 0 }, scores floored before log.
double targeted_loss(std::span<const double> scores, std::size_t target);

/// max{ log s_t0 - max_{j != t0} log s_j, 0 }.
double untargeted_loss(std::span<const double> scores, std::size_t original);

double attack_loss(const AttackSpec &spec, std::span<const double> scores);
bool attack_succeeded(const AttackSpec &spec, std::span<const double> scores);

/// x = clip(x0 + D(delta')) as scored by the model.
Tensor perturbed_image(const AttackSpec &spec, const Decoder &decoder,
                       const Tensor &delta_prime);

/// f(delta') = ||x - x0||^2 + lambda * Loss. Exactly one model query.
ObjectiveValue evaluate(const AttackSpec &spec, const BlackBoxModel &model,
                        const Decoder &decoder, const Tensor &delta_prime);

/// Closed-form gradient of ||x - x0||^2 + lambda * Loss(softmax(Wx + b))
/// with respect to x (no decoder, no clipping). Only defined for
/// linear-softmax models; throws otherwise. Does not consume queries.
Tensor analytic_gradient(const BlackBoxModel &model, const Tensor &x,
                         const AttackSpec &spec);

} // namespace zozoom

#endif // ZOZOOM_OBJECTIVE_HPP

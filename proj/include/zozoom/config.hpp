#ifndef ZOZOOM_CONFIG_HPP
#define ZOZOOM_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zozoom/attack.hpp"

namespace zozoom {

inline constexpr const char *kVersion = "1.0.0";

/// Command-line overrides applied on top of an ATK1 file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> decoder;
  std::optional<std::string> estimator;
  std::optional<std::size_t> q_exploit;
  std::optional<double> lambda_ini;
  std::optional<std::uint64_t> budget;
  std::optional<std::filesystem::path> out;
  bool stop_on_success = false;
};

struct InstanceSpec {
  std::filesystem::path image;
  std::optional<std::size_t> label;
};

/// ATK1 attack configuration with every default filled in.
struct AttackJob {
  std::filesystem::path model_path;
  std::vector<InstanceSpec> instances; // one for `attack`
  AttackMode mode = AttackMode::targeted;
  std::filesystem::path output_dir;
  std::string decoder_spec = "identity"; // identity | bilin[:HxW] | conv:<p> | linear-ae:<p>
  std::optional<Shape> reduced_shape;    // for bare "bilin"
  std::string method;
  AttackConfig attack;
};

/// Parses an ATK1 document. Relative paths are resolved against `base_dir`.
/// Errors name the offending field. Seed precedence: override, config
/// "seed", environment ZOZOOM_SEED, 0.
AttackJob parse_attack_config(const nlohmann::json &j,
                              const std::filesystem::path &base_dir,
                              const ConfigOverrides &overrides);
AttackJob load_attack_config(const std::filesystem::path &path,
                             const ConfigOverrides &overrides);

/// Canonical JSON of the resolved job (used for manifests).
nlohmann::json attack_job_to_json(const AttackJob &job);

/// Seed from ZOZOOM_SEED, if set and numeric.
std::optional<std::uint64_t> env_seed();

std::string default_method_name(EstimatorKind kind, DecoderMode decoder);

nlohmann::json estimator_to_json(const EstimatorConfig &cfg);
EstimatorConfig estimator_from_json(const nlohmann::json &j);

} // namespace zozoom

#endif // ZOZOOM_CONFIG_HPP

#include "zozoom/config.hpp"

#include <cstdlib>
#include <stdexcept>

#include "zozoom/io.hpp"

namespace zozoom {

namespace {

[[noreturn]] void field_error(const std::string &field, const std::string &what) {
  throw std::invalid_argument("config field \"" + field + "\": " + what);
}

double get_positive(const nlohmann::json &j, const std::string &key, double fallback,
                    bool allow_zero = false) {
  if (!j.contains(key) || j[key].is_null()) {
    return fallback;
  }
  if (!j[key].is_number()) {
    field_error(key, "expected a number");
  }
  const double v = j[key].get<double>();
  if (allow_zero ? !(v >= 0.0) : !(v > 0.0)) {
    field_error(key, allow_zero ? "must be >= 0" : "must be > 0");
  }
  return v;
}

std::uint64_t get_count(const nlohmann::json &j, const std::string &key,
                        std::uint64_t fallback) {
  if (!j.contains(key) || j[key].is_null()) {
    return fallback;
  }
  if (!j[key].is_number_integer() || j[key].get<long long>() < 1) {
    field_error(key, "expected an integer >= 1");
  }
  return j[key].get<std::uint64_t>();
}

std::string get_string(const nlohmann::json &j, const std::string &key,
                       const std::string &fallback) {
  if (!j.contains(key) || j[key].is_null()) {
    return fallback;
  }
  if (!j[key].is_string()) {
    field_error(key, "expected a string");
  }
  return j[key].get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path &base,
                              const std::string &p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::optional<std::size_t> get_label(const nlohmann::json &j, const std::string &field) {
  if (!j.contains("target") || j["target"].is_null()) {
    return std::nullopt;
  }
  if (!j["target"].is_number_integer() || j["target"].get<long long>() < 0) {
    field_error(field, "expected a class index >= 0");
  }
  return j["target"].get<std::size_t>();
}

std::string decoder_short_name(DecoderMode mode) {
  switch (mode) {
  case DecoderMode::identity:
    return "identity";
  case DecoderMode::bilinear:
    return "bilin";
  case DecoderMode::conv:
    return "ae";
  case DecoderMode::linear_ae:
    return "linear-ae";
  }
  return "unknown";
}

DecoderMode mode_of_spec(const std::string &spec) {
  const std::string head = spec.substr(0, spec.find(':'));
  if (head == "identity") {
    return DecoderMode::identity;
  }
  if (head == "bilin") {
    return DecoderMode::bilinear;
  }
  if (head == "conv") {
    return DecoderMode::conv;
  }
  if (head == "linear-ae") {
    return DecoderMode::linear_ae;
  }
  field_error("decoder", "unknown decoder \"" + spec + "\"");
}

} // namespace

std::optional<std::uint64_t> env_seed() {
  const char *v = std::getenv("ZOZOOM_SEED");
  if (v == nullptr || *v == '\0') {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(v, &used);
    if (used == std::string(v).size()) {
      return seed;
    }
  } catch (const std::exception &) {
  }
  throw std::invalid_argument(std::string("ZOZOOM_SEED is not an integer: ") + v);
}

std::string default_method_name(EstimatorKind kind, DecoderMode decoder) {
  return (kind == EstimatorKind::coordinate_wise ? "zoo-" : "autozoom-") +
         decoder_short_name(decoder);
}

nlohmann::json estimator_to_json(const EstimatorConfig &cfg) {
  nlohmann::json b;
  switch (cfg.b_policy.kind) {
  case BPolicy::Kind::equal_q:
    b = "equal_q";
    break;
  case BPolicy::Kind::optimal:
    b = "optimal";
    break;
  case BPolicy::Kind::fixed:
    b = cfg.b_policy.value;
    break;
  }
  return {{"kind", to_string(cfg.kind)},
          {"h", cfg.h},
          {"beta", cfg.beta ? nlohmann::json(*cfg.beta) : nlohmann::json(nullptr)},
          {"b_policy", b},
          {"coord_batch", cfg.coord_batch}};
}

EstimatorConfig estimator_from_json(const nlohmann::json &j) {
  EstimatorConfig cfg;
  if (j.is_null()) {
    return cfg;
  }
  if (j.is_string()) {
    cfg.kind = estimator_kind_from_string(j.get<std::string>());
    return cfg;
  }
  if (!j.is_object()) {
    field_error("estimator", "expected an object or a string");
  }
  try {
    cfg.kind = estimator_kind_from_string(get_string(j, "kind", "random"));
  } catch (const std::invalid_argument &e) {
    field_error("estimator.kind", e.what());
  }
  cfg.h = get_positive(j, "h", cfg.h);
  if (j.contains("beta") && !j["beta"].is_null()) {
    cfg.beta = get_positive(j, "beta", 0.0);
  }
  if (j.contains("b_policy")) {
    const auto &b = j["b_policy"];
    if (b.is_number()) {
      if (!(b.get<double>() > 0.0)) {
        field_error("estimator.b_policy", "fixed b must be > 0");
      }
      cfg.b_policy = BPolicy::fixed(b.get<double>());
    } else if (b == "equal_q" || b == "q") {
      cfg.b_policy = BPolicy::equal_q();
    } else if (b == "optimal") {
      cfg.b_policy = BPolicy::optimal();
    } else {
      field_error("estimator.b_policy", "expected \"equal_q\", \"optimal\" or a number");
    }
  }
  cfg.coord_batch = get_count(j, "coord_batch", cfg.coord_batch);
  return cfg;
}

AttackJob parse_attack_config(const nlohmann::json &j,
                              const std::filesystem::path &base_dir,
                              const ConfigOverrides &overrides) {
  if (!j.is_object()) {
    throw std::invalid_argument("attack config must be a JSON object");
  }
  if (j.value("format", std::string("ATK1")) != "ATK1") {
    field_error("format", "expected \"ATK1\"");
  }
  AttackJob job;
  const std::string model = get_string(j, "model", "");
  if (model.empty()) {
    field_error("model", "required");
  }
  job.model_path = resolve(base_dir, model);

  try {
    job.mode = attack_mode_from_string(get_string(j, "mode", "targeted"));
  } catch (const std::invalid_argument &e) {
    field_error("mode", e.what());
  }

  if (j.contains("instances")) {
    if (!j["instances"].is_array() || j["instances"].empty()) {
      field_error("instances", "expected a non-empty array");
    }
    for (std::size_t i = 0; i < j["instances"].size(); ++i) {
      const auto &inst = j["instances"][i];
      const std::string field = "instances[" + std::to_string(i) + "]";
      if (!inst.is_object() || !inst.contains("image") || !inst["image"].is_string()) {
        field_error(field + ".image", "required string");
      }
      job.instances.push_back({resolve(base_dir, inst["image"].get<std::string>()),
                               get_label(inst, field + ".target")});
    }
  } else {
    const std::string image = get_string(j, "image", "");
    if (image.empty()) {
      field_error("image", "required (or give \"instances\")");
    }
    job.instances.push_back({resolve(base_dir, image), get_label(j, "target")});
  }
  if (job.mode == AttackMode::targeted) {
    for (const auto &inst : job.instances) {
      if (!inst.label) {
        field_error("target", "required for targeted attacks");
      }
    }
  }

  job.output_dir = resolve(base_dir, get_string(j, "output", "out"));

  AttackConfig &a = job.attack;
  a.lambda_ini = get_positive(j, "lambda_ini", a.lambda_ini);
  a.switch_period = get_count(j, "switch_period", a.switch_period);
  a.query_budget = get_count(j, "query_budget", a.query_budget);
  a.learning_rate = get_positive(j, "learning_rate", a.learning_rate);
  a.q_explore = get_count(j, "q_explore", a.q_explore);
  a.q_exploit = get_count(j, "q_exploit", a.q_exploit);
  a.distortion_threshold =
      get_positive(j, "distortion_threshold", a.distortion_threshold, true);
  if (j.contains("stop_on_success")) {
    if (!j["stop_on_success"].is_boolean()) {
      field_error("stop_on_success", "expected true or false");
    }
    a.stop_on_success = j["stop_on_success"].get<bool>();
  }
  if (a.q_explore != 1) {
    field_error("q_explore", "exploration uses q = 1");
  }
  if (j.contains("estimator")) {
    a.estimator = estimator_from_json(j["estimator"]);
  }

  if (j.contains("decoder") && !j["decoder"].is_null()) {
    const auto &dec = j["decoder"];
    if (dec.is_string()) {
      job.decoder_spec = dec.get<std::string>();
    } else if (dec.is_object()) {
      job.decoder_spec = get_string(dec, "mode", "identity");
      if (dec.contains("path")) {
        job.decoder_spec += ":" + resolve(base_dir, get_string(dec, "path", "")).string();
      }
      if (dec.contains("reduced_shape")) {
        try {
          job.reduced_shape = shape_from_json(dec["reduced_shape"]);
        } catch (const std::invalid_argument &e) {
          field_error("decoder.reduced_shape", e.what());
        }
      }
    } else {
      field_error("decoder", "expected a string or an object");
    }
  }

  if (j.contains("seed") && !j["seed"].is_null()) {
    if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) {
      field_error("seed", "expected an integer >= 0");
    }
    a.rng_seed = j["seed"].get<std::uint64_t>();
  } else if (auto s = env_seed()) {
    a.rng_seed = *s;
  }

  if (overrides.seed) {
    a.rng_seed = *overrides.seed;
  }
  if (overrides.decoder) {
    job.decoder_spec = *overrides.decoder;
  }
  if (overrides.estimator) {
    a.estimator.kind = estimator_kind_from_string(*overrides.estimator);
  }
  if (overrides.q_exploit) {
    a.q_exploit = *overrides.q_exploit;
  }
  if (overrides.lambda_ini) {
    a.lambda_ini = *overrides.lambda_ini;
  }
  if (overrides.budget) {
    a.query_budget = *overrides.budget;
  }
  if (overrides.stop_on_success) {
    a.stop_on_success = true;
  }
  if (overrides.out) {
    job.output_dir = *overrides.out;
  }

  const DecoderMode mode = mode_of_spec(job.decoder_spec);
  job.method = get_string(j, "method", "");
  if (job.method.empty() || overrides.decoder || overrides.estimator) {
    job.method = default_method_name(a.estimator.kind, mode);
  }
  a.validate();
  return job;
}

AttackJob load_attack_config(const std::filesystem::path &path,
                             const ConfigOverrides &overrides) {
  return parse_attack_config(read_json_file(path), path.parent_path(), overrides);
}

nlohmann::json attack_job_to_json(const AttackJob &job) {
  const AttackConfig &a = job.attack;
  nlohmann::json instances = nlohmann::json::array();
  for (const auto &inst : job.instances) {
    instances.push_back(
        {{"image", inst.image.string()},
         {"target", inst.label ? nlohmann::json(*inst.label) : nlohmann::json(nullptr)}});
  }
  nlohmann::json decoder = {{"spec", job.decoder_spec}};
  if (job.reduced_shape) {
    decoder["reduced_shape"] = shape_to_json(*job.reduced_shape);
  }
  return {{"format", "ATK1"},
          {"method", job.method},
          {"model", job.model_path.string()},
          {"instances", instances},
          {"mode", to_string(job.mode)},
          {"output", job.output_dir.string()},
          {"lambda_ini", a.lambda_ini},
          {"switch_period", a.switch_period},
          {"query_budget", a.query_budget},
          {"learning_rate", a.learning_rate},
          {"q_explore", a.q_explore},
          {"q_exploit", a.q_exploit},
          {"estimator", estimator_to_json(a.estimator)},
          {"decoder", decoder},
          {"distortion_threshold", a.distortion_threshold},
          {"stop_on_success", a.stop_on_success},
          {"seed", a.rng_seed}};
}

} // namespace zozoom

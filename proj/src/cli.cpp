#include "zozoom/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <iostream>
#include <random>
#include <stdexcept>

#include <omp.h>

#include "CLI11.hpp"
#include "zozoom/attack.hpp"
#include "zozoom/bench.hpp"
#include "zozoom/config.hpp"
#include "zozoom/io.hpp"
#include "zozoom/report.hpp"

namespace zozoom {

namespace fs = std::filesystem;

Shape parse_shape(const std::string &s) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (true) {
    const auto x = s.find('x', start);
    const std::string part = s.substr(start, x == std::string::npos ? x : x - start);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (part.empty() || used != part.size()) {
      throw std::invalid_argument("bad shape \"" + s + "\", expected HxWxC");
    }
    dims.push_back(v);
    if (x == std::string::npos) {
      break;
    }
    start = x + 1;
  }
  if (dims.size() == 2) {
    dims.push_back(1);
  }
  if (dims.size() != 3) {
    throw std::invalid_argument("bad shape \"" + s + "\", expected HxWxC");
  }
  const Shape shape{dims[0], dims[1], dims[2]};
  validate_shape(shape);
  return shape;
}

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  int verbosity = 0;
};

nlohmann::json manifest(const std::string &command, const nlohmann::json &config,
                        std::uint64_t seed) {
  return {{"tool", "zozoom"},
          {"version", kVersion},
          {"command", command},
          {"seed", seed},
          {"config", config}};
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t> &flag,
                           std::uint64_t fallback = 0) {
  if (flag) {
    return *flag;
  }
  if (auto s = env_seed()) {
    return *s;
  }
  return fallback;
}

Decoder make_decoder(const AttackJob &job, Shape full) {
  const Shape fallback{std::max<std::size_t>(1, full.height / 4),
                       std::max<std::size_t>(1, full.width / 4), full.channels};
  return decoder_from_flag(job.decoder_spec, full, job.reduced_shape.value_or(fallback));
}

std::size_t resolve_label(const InstanceSpec &inst, AttackMode mode,
                          const BlackBoxModel &model, const Tensor &x0) {
  if (inst.label) {
    return *inst.label;
  }
  if (mode == AttackMode::targeted) {
    throw std::invalid_argument("config field \"target\": required for targeted attacks");
  }
  // Uncounted setup query on a separate counter.
  return argmax(model.share().query(x0));
}

RunLabel run_label(const AttackJob &job) {
  return {job.method, job.attack.lambda_ini, job.attack.query_budget,
          job.attack.distortion_threshold};
}

void write_attack_outputs(const fs::path &dir, const AttackTrace &trace,
                          const RunLabel &label) {
  write_text_file(dir / "trace.jsonl", trace_to_jsonl(trace));
  write_json_file(dir / "summary.json", summary_to_json(trace, label));
  if (trace.best) {
    save_tensor(trace.best->image, dir / "best.json");
  }
}

void log_record(const IterationRecord &r) {
  std::fprintf(stderr, "iter %zu queries %llu %s lambda %g loss %.6g dist %.6g%s\n",
               r.iteration, static_cast<unsigned long long>(r.queries),
               to_string(r.phase).c_str(), r.lambda, r.loss_term,
               r.per_pixel_distortion, r.is_success ? " success" : "");
}

ConfigOverrides overrides_from(CLI::App &sub, const CommonFlags &common) {
  ConfigOverrides o;
  o.seed = common.seed;
  if (!common.out.empty()) {
    o.out = common.out;
  }
  auto str = [&](const char *name, std::optional<std::string> &dst) {
    if (sub.count(name) > 0) {
      dst = sub.get_option(name)->as<std::string>();
    }
  };
  str("--decoder", o.decoder);
  str("--estimator", o.estimator);
  if (sub.count("--q-exploit") > 0) {
    o.q_exploit = sub.get_option("--q-exploit")->as<std::size_t>();
  }
  if (sub.count("--lambda-ini") > 0) {
    o.lambda_ini = sub.get_option("--lambda-ini")->as<double>();
  }
  o.stop_on_success = sub.count("--stop-on-success") > 0;
  if (sub.count("--budget") > 0) {
    o.budget = sub.get_option("--budget")->as<std::uint64_t>();
  }
  return o;
}

void add_attack_flags(CLI::App *sub) {
  sub->add_option("--decoder", "identity | bilin[:HxW] | conv:<path> | linear-ae:<path>");
  sub->add_option("--estimator", "zoo or random")
      ->check(CLI::IsMember({"zoo", "random"}));
  sub->add_option("--q-exploit", "directions averaged after initial success")
      ->check(CLI::PositiveNumber);
  sub->add_option("--lambda-ini", "initial loss weight")->check(CLI::PositiveNumber);
  sub->add_option("--budget", "query budget Q")->check(CLI::PositiveNumber);
  sub->add_flag("--stop-on-success", "end each attack at its initial success");
}

int cmd_attack(CLI::App &sub, const CommonFlags &common) {
  const AttackJob job = load_attack_config(common.config, overrides_from(sub, common));
  if (job.instances.size() != 1) {
    throw std::invalid_argument("attack takes one image; use batch for \"instances\"");
  }
  const BlackBoxModel model = load_model(job.model_path);
  const Tensor x0 = load_tensor(job.instances[0].image);
  const Decoder decoder = make_decoder(job, x0.shape());
  const std::size_t label = resolve_label(job.instances[0], job.mode, model, x0);
  const AttackSpec spec{job.mode, label, job.attack.lambda_ini, x0};

  fs::create_directories(job.output_dir);
  write_json_file(job.output_dir / "manifest.json",
                  manifest("attack", attack_job_to_json(job), job.attack.rng_seed));
  RecordObserver observer;
  if (common.verbosity > 0) {
    observer = log_record;
  }
  const AttackTrace trace = run_attack(model, decoder, spec, job.attack, observer);
  write_attack_outputs(job.output_dir, trace, run_label(job));
  if (model.query_count() != trace.total_queries) {
    throw std::logic_error("query counter disagrees with trace");
  }
  return trace.initial_success ? kExitSuccess : kExitNoSuccess;
}

int cmd_batch(CLI::App &sub, const CommonFlags &common) {
  const AttackJob job = load_attack_config(common.config, overrides_from(sub, common));
  const BlackBoxModel model = load_model(job.model_path);
  const std::size_t n = job.instances.size();

  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  for (const auto &inst : job.instances) {
    images.push_back(load_tensor(inst.image));
    labels.push_back(resolve_label(inst, job.mode, model, images.back()));
  }
  const Decoder decoder = make_decoder(job, images.front().shape());

  fs::create_directories(job.output_dir);
  write_json_file(job.output_dir / "manifest.json",
                  manifest("batch", attack_job_to_json(job), job.attack.rng_seed));

  const RunLabel label = run_label(job);
  std::vector<std::optional<AttackTrace>> traces(n);
  std::vector<std::string> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(common.jobs, 1))
  for (std::int64_t k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(k);
    char name[32];
    std::snprintf(name, sizeof name, "attack_%03zu", i);
    const fs::path dir = job.output_dir / name;
    try {
      const BlackBoxModel own = model.share();
      AttackConfig cfg = job.attack;
      cfg.rng_seed = instance_seed(job.attack.rng_seed, i);
      const AttackSpec spec{job.mode, labels[i], cfg.lambda_ini, images[i]};
      AttackTrace trace = run_attack(own, decoder, spec, cfg);
      write_attack_outputs(dir, trace, label);
      trace.records.clear();
      traces[i] = std::move(trace);
    } catch (const std::exception &e) {
      errors[i] = e.what();
      try {
        write_text_file(dir / "error.txt", errors[i] + "\n");
      } catch (...) {
      }
    }
  }

  std::vector<AttackTrace> done;
  std::vector<LoadedSummary> loaded;
  bool failed = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!traces[i]) {
      std::cerr << "attack " << i << " failed: " << errors[i] << "\n";
      failed = true;
      continue;
    }
    loaded.push_back(summary_from_json(summary_to_json(*traces[i], label)));
    done.push_back(std::move(*traces[i]));
  }
  write_json_file(job.output_dir / "batch_summary.json", batch_summary_to_json(done, label));
  if (!loaded.empty()) {
    write_text_file(job.output_dir / "batch_summary.csv", report_csv(build_report(loaded)));
  }
  if (failed) {
    return kExitError;
  }
  const bool any = std::any_of(done.begin(), done.end(),
                               [](const AttackTrace &t) { return t.initial_success.has_value(); });
  return any ? kExitSuccess : kExitNoSuccess;
}

int cmd_bench(const CommonFlags &common, std::optional<std::size_t> trials) {
  BenchSpec spec;
  if (!common.config.empty()) {
    spec = bench_spec_from_json(read_json_file(common.config));
  }
  spec.seed = resolve_seed(common.seed, spec.seed);
  if (trials) {
    spec.trials = *trials;
  }
  const fs::path out = common.out.empty() ? fs::path("bench_out") : fs::path(common.out);
  fs::create_directories(out);
  write_json_file(out / "manifest.json", manifest("bench", bench_spec_to_json(spec), spec.seed));
  omp_set_num_threads(std::max(common.jobs, 1));
  const BenchReport report = run_bench(spec);
  emit_plot_data(report, out / "bench.csv");
  std::size_t violations = 0;
  for (const auto &row : report.rows) {
    if (!row.within_bound()) {
      ++violations;
      std::cerr << "cell " << row.cell << ": mse " << row.empirical_mse
                << " exceeds bound " << row.bound << "\n";
    }
  }
  std::cout << report.rows.size() << " cells, " << violations << " bound violations\n";
  return violations == 0 ? kExitSuccess : kExitNoSuccess;
}

struct TrainAeFlags {
  std::vector<std::string> data;
  std::size_t synthetic = 0;
  std::string shape = "8x8x1";
  std::size_t planted_dim = 0;
  double noise = 0.0;
  std::size_t d_prime = 0;
  std::size_t epochs = 500;
  double lr = 0.5;
  std::string init = "uniform";
};

int cmd_train_ae(const CommonFlags &common, const TrainAeFlags &f) {
  const std::uint64_t seed = resolve_seed(common.seed);
  std::vector<Tensor> data;
  nlohmann::json source;
  if (!f.data.empty()) {
    for (const auto &p : f.data) {
      data.push_back(load_tensor(p));
    }
    source = {{"files", f.data}};
  } else {
    if (f.synthetic == 0) {
      throw std::invalid_argument("train-ae needs --data files or --synthetic N");
    }
    const std::size_t k = f.planted_dim == 0 ? f.d_prime : f.planted_dim;
    data = planted_subspace_data(seed, parse_shape(f.shape), k, f.synthetic, f.noise);
    source = {{"synthetic", f.synthetic},
              {"shape", f.shape},
              {"planted_dim", k},
              {"noise", f.noise}};
  }
  const AeInit init = f.init == "identity" ? AeInit::identity : AeInit::uniform;
  const AeTrainResult result = train_linear_ae(data, f.d_prime, f.epochs, f.lr, seed, init);

  const fs::path out = common.out.empty() ? fs::path("ae_out") : fs::path(common.out);
  fs::create_directories(out);
  const nlohmann::json config = {{"data", source},      {"d_prime", f.d_prime},
                                 {"epochs", f.epochs},  {"lr", f.lr},
                                 {"init", f.init}};
  write_json_file(out / "manifest.json", manifest("train-ae", config, seed));
  save_decoder(Decoder::linear_ae(result.model), out / "decoder.json");
  char line[96];
  std::snprintf(line, sizeof line, "training mse %.6e -> %.6e\n",
                result.mse_history.front(), result.model.training_mse);
  std::cout << line;
  return kExitSuccess;
}

struct GenModelFlags {
  std::string shape = "32x32x1";
  std::size_t classes = 5;
  std::string kind = "linear";
  std::size_t hidden = 32;
  std::size_t images = 0;
  std::string mode = "targeted";
};

int cmd_gen_model(const CommonFlags &common, const GenModelFlags &f) {
  const std::uint64_t seed = resolve_seed(common.seed);
  const Shape shape = parse_shape(f.shape);
  const BlackBoxModel model = gen_synthetic_model(
      seed, shape, f.classes, synthetic_kind_from_string(f.kind), f.hidden);
  const AttackMode mode = attack_mode_from_string(f.mode);

  const fs::path out = common.out.empty() ? fs::path("model_out") : fs::path(common.out);
  fs::create_directories(out);
  save_model(model, out / "model.json");

  nlohmann::json instances = nlohmann::json::array();
  std::mt19937_64 rng(instance_seed(seed, 0));
  for (std::size_t i = 0; i < f.images; ++i) {
    const Tensor image = gen_smooth_image(instance_seed(seed, i + 1), shape);
    char name[40];
    std::snprintf(name, sizeof name, "images/image_%03zu.json", i);
    save_tensor(image, out / name);
    const std::size_t top = argmax(model.share().query(image));
    std::size_t label = top;
    if (mode == AttackMode::targeted) {
      label = (top + 1 + rng() % (f.classes - 1)) % f.classes;
    }
    instances.push_back({{"image", name}, {"target", label}});
  }
  if (f.images > 0) {
    write_json_file(out / "attack.json", {{"format", "ATK1"},
                                          {"model", "model.json"},
                                          {"mode", to_string(mode)},
                                          {"instances", instances},
                                          {"output", "runs"},
                                          {"seed", seed}});
  }
  const nlohmann::json config = {{"shape", f.shape}, {"classes", f.classes},
                                 {"kind", f.kind},   {"hidden", f.hidden},
                                 {"images", f.images}, {"mode", f.mode}};
  write_json_file(out / "manifest.json", manifest("gen-model", config, seed));
  return kExitSuccess;
}

int cmd_report(const CommonFlags &common, const std::vector<std::string> &paths) {
  std::vector<LoadedSummary> all;
  for (const auto &p : paths) {
    auto loaded = load_summaries(p);
    all.insert(all.end(), loaded.begin(), loaded.end());
  }
  const std::string csv = report_csv(build_report(all));
  if (common.out.empty()) {
    std::cout << csv;
  } else {
    write_text_file(common.out, csv);
  }
  return kExitSuccess;
}

} // namespace

int run_cli(const std::vector<std::string> &args) {
  CLI::App app{"Query-efficient zeroth-order black-box attacks", "zozoom"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags common;
  auto add_common = [&](CLI::App *sub, bool needs_config) {
    auto *cfg = sub->add_option("--config", common.config, "configuration file");
    if (needs_config) {
      cfg->required()->check(CLI::ExistingFile);
    }
    sub->add_option("--out", common.out, "output path");
    sub->add_option("--seed", common.seed, "seed (overrides config and ZOZOOM_SEED)");
    sub->add_option("--jobs", common.jobs, "parallel workers")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", common.verbosity, "progress on stderr");
  };

  auto *attack = app.add_subcommand("attack", "run one attack from an ATK1 config");
  add_common(attack, true);
  add_attack_flags(attack);

  auto *batch = app.add_subcommand("batch", "run the attacks listed under \"instances\"");
  add_common(batch, true);
  add_attack_flags(batch);

  std::optional<std::size_t> trials;
  auto *bench = app.add_subcommand("bench", "estimator error versus its bound");
  add_common(bench, false);
  bench->add_option("--trials", trials, "Monte Carlo trials per cell")
      ->check(CLI::PositiveNumber);

  TrainAeFlags ae;
  auto *train = app.add_subcommand("train-ae", "train a linear autoencoder decoder");
  add_common(train, false);
  train->add_option("--data", ae.data, "TZR1 training images");
  train->add_option("--synthetic", ae.synthetic, "planted-subspace samples to generate");
  train->add_option("--shape", ae.shape, "shape of synthetic samples");
  train->add_option("--planted-dim", ae.planted_dim, "planted subspace dimension");
  train->add_option("--noise", ae.noise, "noise std of synthetic samples");
  train->add_option("--d-prime", ae.d_prime, "code dimension")->required();
  train->add_option("--epochs", ae.epochs, "gradient steps");
  train->add_option("--lr", ae.lr, "initial learning rate");
  train->add_option("--init", ae.init, "uniform or identity")
      ->check(CLI::IsMember({"uniform", "identity"}));

  GenModelFlags gm;
  auto *gen = app.add_subcommand("gen-model", "write a synthetic classifier and images");
  add_common(gen, false);
  gen->add_option("--shape", gm.shape, "input shape HxWxC");
  gen->add_option("--classes", gm.classes, "number of classes")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--kind", gm.kind, "linear, smooth or mlp")
      ->check(CLI::IsMember({"linear", "smooth", "mlp"}));
  gen->add_option("--hidden", gm.hidden, "MLP hidden width")->check(CLI::PositiveNumber);
  gen->add_option("--images", gm.images, "smooth images to emit with an ATK1 batch config");
  gen->add_option("--mode", gm.mode, "targeted or untargeted")
      ->check(CLI::IsMember({"targeted", "untargeted"}));

  std::vector<std::string> report_paths;
  auto *report = app.add_subcommand("report", "aggregate summaries into a CSV table");
  add_common(report, false);
  report->add_option("paths", report_paths, "summary files or run directories")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) {
    argv_rev.pop_back(); // program name
  }
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitSuccess : kExitError;
  }

  try {
    if (*attack) {
      return cmd_attack(*attack, common);
    }
    if (*batch) {
      return cmd_batch(*batch, common);
    }
    if (*bench) {
      return cmd_bench(common, trials);
    }
    if (*train) {
      return cmd_train_ae(common, ae);
    }
    if (*gen) {
      return cmd_gen_model(common, gm);
    }
    return cmd_report(common, report_paths);
  } catch (const std::exception &e) {
    std::cerr << "zozoom: " << e.what() << "\n";
    return kExitError;
  }
}

} // namespace zozoom

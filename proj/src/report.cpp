#include "zozoom/report.hpp"

#include <cstdio>
#include <stdexcept>

#include "zozoom/io.hpp"

namespace zozoom {

namespace {

nlohmann::json point_json(const std::optional<SuccessPoint> &p) {
  if (!p) {
    return nullptr;
  }
  return {{"iteration", p->iteration},
          {"queries", p->queries},
          {"per_pixel_distortion", p->per_pixel_distortion}};
}

std::optional<SuccessPoint> point_from_json(const nlohmann::json &j, const char *key) {
  if (!j.contains(key) || j[key].is_null()) {
    return std::nullopt;
  }
  const auto &p = j[key];
  return SuccessPoint{p.at("iteration").get<std::size_t>(),
                      p.at("queries").get<std::uint64_t>(),
                      p.at("per_pixel_distortion").get<double>()};
}

std::string fmt(const char *pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string opt(const std::optional<double> &v, const char *pattern, double scale = 1.0) {
  return v ? fmt(pattern, *v * scale) : std::string();
}

} // namespace

nlohmann::json summary_to_json(const AttackTrace &trace, const RunLabel &label) {
  nlohmann::json best = nullptr;
  if (trace.best) {
    best = {{"iteration", trace.best->iteration},
            {"queries", trace.best->queries},
            {"per_pixel_distortion", trace.best->per_pixel_distortion}};
  }
  return {{"format", "TRC1"},
          {"version", kSummaryVersion},
          {"method", label.method},
          {"lambda_ini", label.lambda_ini},
          {"query_budget", label.query_budget},
          {"distortion_threshold", label.distortion_threshold},
          {"iterations", trace.records.empty() ? 0 : trace.records.size() - 1},
          {"total_queries", trace.total_queries},
          {"initial_success", point_json(trace.initial_success)},
          {"threshold_reached", point_json(trace.threshold_reached)},
          {"best", best}};
}

LoadedSummary summary_from_json(const nlohmann::json &j) {
  if (!j.is_object() || j.value("format", std::string()) != "TRC1") {
    throw std::invalid_argument("not a TRC1 summary");
  }
  const int version = j.value("version", -1);
  if (version != kSummaryVersion) {
    throw std::invalid_argument("incompatible summary version " + std::to_string(version) +
                                " (expected " + std::to_string(kSummaryVersion) + ")");
  }
  LoadedSummary s;
  s.label.method = j.at("method").get<std::string>();
  s.label.lambda_ini = j.at("lambda_ini").get<double>();
  s.label.query_budget = j.value("query_budget", std::uint64_t{0});
  s.label.distortion_threshold = j.at("distortion_threshold").get<double>();
  s.trace.total_queries = j.value("total_queries", std::uint64_t{0});
  s.trace.initial_success = point_from_json(j, "initial_success");
  s.trace.threshold_reached = point_from_json(j, "threshold_reached");
  if (auto b = point_from_json(j, "best")) {
    s.trace.best = BestExample{Tensor(Shape{1, 1, 1}), b->iteration, b->queries,
                               b->per_pixel_distortion};
  }
  return s;
}

std::vector<LoadedSummary> load_summaries(const std::filesystem::path &path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) {
    file = std::filesystem::exists(path / "batch_summary.json")
               ? path / "batch_summary.json"
               : path / "summary.json";
  }
  const auto j = read_json_file(file);
  std::vector<LoadedSummary> out;
  if (j.is_object() && j.contains("attacks")) {
    if (j.value("format", std::string()) != "TRC1" ||
        j.value("version", -1) != kSummaryVersion) {
      throw std::invalid_argument(file.string() + ": incompatible batch summary version");
    }
    for (const auto &a : j["attacks"]) {
      out.push_back(summary_from_json(a));
    }
  } else {
    try {
      out.push_back(summary_from_json(j));
    } catch (const std::exception &e) {
      throw std::invalid_argument(file.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<ReportRow> build_report(const std::vector<LoadedSummary> &summaries) {
  if (summaries.empty()) {
    throw std::invalid_argument("report needs at least one summary");
  }
  struct Group {
    RunLabel label;
    std::vector<AttackTrace> traces;
  };
  std::vector<Group> groups;
  for (const auto &s : summaries) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group &g) {
      return g.label.method == s.label.method && g.label.lambda_ini == s.label.lambda_ini;
    });
    if (it == groups.end()) {
      groups.push_back({s.label, {}});
      it = std::prev(groups.end());
    }
    it->traces.push_back(s.trace);
  }

  std::vector<ReportRow> rows;
  for (const auto &g : groups) {
    rows.push_back({g.label.method, g.label.lambda_ini,
                    summarize(g.traces, g.label.distortion_threshold), std::nullopt});
  }

  std::size_t baseline = 0;
  bool found = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].method.rfind("zoo", 0) == 0 &&
        (!found || rows[i].lambda_ini < rows[baseline].lambda_ini)) {
      baseline = i;
      found = true;
    }
  }
  const auto &base = rows[baseline].summary.mean_queries_initial;
  if (base && *base > 0.0) {
    for (auto &r : rows) {
      if (r.summary.mean_queries_initial) {
        r.reduction_ratio = query_reduction_ratio(*base, *r.summary.mean_queries_initial);
      }
    }
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow> &rows) {
  std::string out = "method,lambda_ini,ASR,mean_queries_initial,query_reduction_ratio,"
                    "mean_perpixel_dist_initial,TPR,mean_queries_to_threshold\n";
  for (const auto &r : rows) {
    out += r.method + "," + fmt("%g", r.lambda_ini) + "," +
           fmt("%.4f", 100.0 * r.summary.asr) + "," +
           opt(r.summary.mean_queries_initial, "%.2f") + "," +
           opt(r.reduction_ratio, "%.4f", 100.0) + "," +
           opt(r.summary.mean_per_pixel_initial, "%.6e") + "," +
           opt(r.summary.tpr, "%.4f", 100.0) + "," +
           opt(r.summary.mean_queries_threshold, "%.2f") + "\n";
  }
  return out;
}

nlohmann::json batch_summary_to_json(const std::vector<AttackTrace> &traces,
                                     const RunLabel &label) {
  nlohmann::json attacks = nlohmann::json::array();
  for (const auto &t : traces) {
    attacks.push_back(summary_to_json(t, label));
  }
  const BatchSummary s = summarize(traces, label.distortion_threshold);
  auto optj = [](const std::optional<double> &v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"format", "TRC1"},
          {"version", kSummaryVersion},
          {"method", label.method},
          {"lambda_ini", label.lambda_ini},
          {"attacks_run", s.attacks},
          {"successes", s.successes},
          {"asr", s.asr},
          {"mean_queries_initial", optj(s.mean_queries_initial)},
          {"mean_per_pixel_initial", optj(s.mean_per_pixel_initial)},
          {"tpr", optj(s.tpr)},
          {"mean_queries_threshold", optj(s.mean_queries_threshold)},
          {"attacks", attacks}};
}

} // namespace zozoom

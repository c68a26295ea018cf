#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <cdantzig/cdantzig.hpp>

namespace cdantzig::cli {

struct GlobalOptions {
  std::uint64_t seed = 20240801;
  std::string out;  // empty: stdout
  unsigned threads = 1;
};

struct SpecOptions {
  std::string spec;  // builtin name or path to a SemSpec JSON file
  BuiltinParams params;
};

inline bool is_builtin_name(const std::string& name) {
  for (const char* b : {"sem_example", "sem_A", "sem_B", "sem_C", "iv_strong", "iv_weak"}) {
    if (name == b) return true;
  }
  return false;
}

inline SemSpec load_spec(const SpecOptions& opt) {
  if (opt.spec.empty()) throw ValidationError(ValidationKind::bad_value, "--spec is required");
  if (is_builtin_name(opt.spec)) return validate_spec(builtin_spec(opt.spec, opt.params));
  if (!std::filesystem::exists(opt.spec)) {
    throw ValidationError(ValidationKind::unknown_name, "'" + opt.spec + "' is neither a builtin spec nor a file");
  }
  return validate_spec(spec_from_json(parse_json_text(read_file(opt.spec), opt.spec)));
}

/// Writes to --out when given, otherwise to `fallback`.
inline void emit(const GlobalOptions& g, std::ostream& fallback, const std::string& text) {
  if (g.out.empty()) {
    fallback << text;
  } else {
    write_file(g.out, text);
  }
}

inline std::string hash_text(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

inline std::vector<EnvDataset> load_datasets(const std::string& path) {
  auto envs = datasets_from_csv(read_file(path));
  if (envs.size() < 2) {
    throw ValidationError(ValidationKind::dimension,
                          path + ": need at least two environments, found " + std::to_string(envs.size()));
  }
  return envs;
}

/// Parses "1,3,4" (1-based) into sorted 0-based indices.
inline std::vector<int> parse_index_list(const std::string& text, int p) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    int k = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), k);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      throw ValidationError(ValidationKind::bad_value, "bad index '" + cell + "'");
    }
    if (k < 1 || k > p) throw ValidationError(ValidationKind::dimension, "index " + cell + " out of range 1.." + std::to_string(p));
    out.push_back(k - 1);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  SpecOptions spec;
  std::size_t n = 0;  // per environment
  std::uint64_t replicate = 0;
};

inline int cmd_simulate(const GlobalOptions& g, const SimulateOptions& opt, std::ostream& out) {
  const SemSpec spec = load_spec(opt.spec);
  const SemSampler sampler(spec);
  const auto envs = simulate_all(sampler, opt.n, g.seed, opt.replicate);
  const std::string hash = spec_hash(spec);
  emit(g, out, datasets_to_csv(envs, spec.p) + provenance_line(g.seed, hash));
  if (!g.out.empty()) {
    Json prov;
    prov["seed"] = g.seed;
    prov["spec_hash"] = hash;
    prov["n_per_env"] = opt.n;
    prov["replicate"] = opt.replicate;
    prov["spec"] = spec_to_json(spec);
    write_file(g.out + ".provenance.json", prov.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string data;
  std::string from_gram;
  bool regularized = false;
  std::optional<double> lambda;
  std::optional<double> lambda_theory;  // constant C of 5 C sqrt(log p / min n)
  bool cv = false;
  bool scale = false;
  bool no_center = false;
  double alpha = 0.05;
  int folds = 10;
  bool json = false;  // print JSON instead of the table when no --out
  std::string save_gram;  // also write the gram of the data as JSON
};

inline DantzigFit fit_from_gram(const GramShift& gram, const FitOptions& opt) {
  if (opt.cv) throw ValidationError(ValidationKind::bad_value, "--cv needs the data, not a gram file");
  if (opt.regularized) {
    if (!opt.lambda) throw ValidationError(ValidationKind::bad_value, "--from-gram with --regularized needs --lambda");
    const RegFit r = fit_regularized(gram, *opt.lambda);
    if (!r.feasible()) throw SolverFailure("regularized LP is " + to_string(r.status));
    DantzigFit fit;
    fit.method = "regularized";
    fit.beta = r.beta;
    fit.lambda = opt.lambda;
    return fit;
  }
  return gram.n_envs() == 2 ? fit_closed_form(gram) : fit_minmax(gram);
}

inline DantzigFit fit_from_data(const std::vector<EnvDataset>& envs, const FitOptions& opt, unsigned threads,
                                std::uint64_t seed) {
  const bool center = !opt.no_center;
  if (!opt.regularized) {
    if (opt.cv || opt.lambda) throw ValidationError(ValidationKind::bad_value, "--cv and --lambda need --regularized");
    if (envs.size() == 2) return fit_unregularized(envs[0], envs[1], center);
    return fit_minmax(prepare_gram(envs, {center, opt.scale}));
  }
  if (opt.lambda && opt.cv) throw ValidationError(ValidationKind::bad_value, "give either --lambda or --cv");
  if (opt.lambda) {
    const GramShift gram = prepare_gram(envs, {center, opt.scale});
    const RegFit r = fit_regularized(gram, *opt.lambda);
    if (!r.feasible()) throw SolverFailure("regularized LP is " + to_string(r.status));
    DantzigFit fit;
    fit.method = "regularized";
    fit.beta = r.beta;
    fit.lambda = opt.lambda;
    return fit;
  }
  CvOptions cv;
  cv.folds = opt.folds;
  cv.seed = seed;
  cv.center = center;
  cv.scale = opt.scale;
  cv.threads = threads;
  return fit_cross_validated(envs, cv);
}

inline int cmd_fit(const GlobalOptions& g, const FitOptions& opt, std::ostream& out) {
  if (opt.data.empty() == opt.from_gram.empty()) {
    throw ValidationError(ValidationKind::bad_value, "give exactly one of a data file or --from-gram");
  }
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ValidationError(ValidationKind::bad_value, "--alpha must be in (0, 1)");
  if (opt.lambda && opt.lambda_theory) throw ValidationError(ValidationKind::bad_value, "give either --lambda or --lambda-theory");
  FitOptions resolved = opt;
  auto theory = [&](int p, const std::vector<std::size_t>& sizes) {
    if (opt.lambda_theory) {
      resolved.lambda = lambda_theory(*opt.lambda_theory, p, *std::min_element(sizes.begin(), sizes.end()));
    }
  };
  DantzigFit fit;
  if (!opt.from_gram.empty()) {
    const GramShift gram = gram_from_json(parse_json_text(read_file(opt.from_gram), opt.from_gram));
    theory(gram.p, gram.sample_sizes);
    fit = fit_from_gram(gram, resolved);
  } else {
    const auto envs = load_datasets(opt.data);
    if (!opt.save_gram.empty()) {
      write_file(opt.save_gram, gram_to_json(prepare_gram(envs, {!opt.no_center, opt.scale})).dump(2) + "\n");
    }
    std::vector<std::size_t> sizes;
    for (const auto& e : envs) sizes.push_back(e.n());
    theory(envs.front().p(), sizes);
    fit = fit_from_data(envs, resolved, g.threads, g.seed);
  }
  const std::string json = fit_to_json(fit, opt.alpha).dump(2) + "\n";
  if (!g.out.empty()) write_file(g.out, json);
  out << (opt.json && g.out.empty() ? json : format_fit_table(fit));
  return 0;
}

// ---------------------------------------------------------------- preselect

struct PreselectCliOptions {
  std::string data;
  std::optional<std::string> observational;
  int folds = 10;
  bool fit = false;  // run the two-stage fit on the selected columns
  bool regularized = false;
};

inline int cmd_preselect(const GlobalOptions& g, const PreselectCliOptions& opt, std::ostream& out) {
  const auto envs = load_datasets(opt.data);
  PreselectOptions po;
  po.folds = opt.folds;
  po.seed = g.seed;
  po.observational_label = opt.observational;
  const ActiveSet set = lasso_preselect(envs, po);
  Json j;
  Json idx = Json::array();
  for (int k : set.indices) idx.push_back(k + 1);
  j["active_set"] = std::move(idx);
  j["coefficients"] = std::vector<double>(set.coefficients.data(), set.coefficients.data() + set.coefficients.size());
  j["lambda"] = set.lambda;
  j["source"] = opt.observational ? *opt.observational : "pooled";
  if (opt.fit) {
    if (set.indices.empty()) throw ValidationError(ValidationKind::bad_value, "Lasso selected no predictors");
    TwoStageOptions ts;
    ts.regularized = opt.regularized;
    ts.cv.seed = g.seed;
    ts.cv.threads = g.threads;
    j["fit"] = fit_to_json(two_stage_fit(envs, set.indices, ts));
  }
  emit(g, out, j.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- coverage-study

struct CoverageCliOptions {
  SpecOptions spec{"sem_A", {}};
  std::vector<std::size_t> n_totals{500, 1000};
  std::size_t replicates = 500;
  double alpha = 0.05;
  int target = 1;  // 1-based
};

inline std::string coverage_csv(const std::vector<CoverageRow>& rows) {
  std::string s = "n_total,replicates,failures,coverage,coverage_se,avg_length,length_sd,length_se\n";
  for (const auto& r : rows) {
    s += std::to_string(r.n_total) + "," + std::to_string(r.replicates) + "," + std::to_string(r.failures) + "," +
         format_number(r.coverage) + "," + format_number(r.coverage_se) + "," + format_number(r.avg_length) + "," +
         format_number(r.length_sd) + "," + format_number(r.length_se) + "\n";
  }
  return s;
}

inline int cmd_coverage_study(const GlobalOptions& g, const CoverageCliOptions& opt, std::ostream& out) {
  const SemSpec spec = load_spec(opt.spec);
  CoverageConfig cfg;
  cfg.target = opt.target - 1;
  cfg.n_totals = opt.n_totals;
  cfg.replicates = opt.replicates;
  cfg.seed = g.seed;
  cfg.alpha = opt.alpha;
  cfg.threads = g.threads;
  emit(g, out, coverage_csv(coverage_study(spec, cfg)) + provenance_line(g.seed, spec_hash(spec)));
  return 0;
}

// ---------------------------------------------------------------- iv-compare

struct IvCliOptions {
  std::vector<std::string> models{"iv_strong", "iv_weak"};
  std::vector<std::size_t> n_per_env{20, 50, 100};
  std::size_t replicates = 500;
};

inline std::string iv_csv(const std::vector<IvRow>& rows) {
  std::string s =
      "model,n,mse_dantzig,mse_wald,mse_dantzig_se,mse_wald_se,mse_dantzig_sd,mse_wald_sd,"
      "mse_dantzig_trimmed,mse_wald_trimmed,dantzig_failures,wald_failures\n";
  for (const auto& r : rows) {
    s += r.model + "," + std::to_string(r.n_per_env) + "," + format_number(r.se_dantzig.mean) + "," +
         format_number(r.se_wald.mean) + "," + format_number(r.se_dantzig.se) + "," + format_number(r.se_wald.se) + "," +
         format_number(r.se_dantzig.sd) + "," + format_number(r.se_wald.sd) + "," + format_number(r.trimmed_dantzig) +
         "," + format_number(r.trimmed_wald) + "," + std::to_string(r.dantzig_failures) + "," +
         std::to_string(r.wald_failures) + "\n";
  }
  return s;
}

inline int cmd_iv_compare(const GlobalOptions& g, const IvCliOptions& opt, std::ostream& out) {
  IvConfig cfg;
  cfg.models = opt.models;
  cfg.n_per_env = opt.n_per_env;
  cfg.replicates = opt.replicates;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  const auto rows = iv_compare(cfg);
  std::string joined;
  for (const auto& m : opt.models) joined += spec_to_json(builtin_spec(m)).dump();
  emit(g, out, iv_csv(rows) + provenance_line(g.seed, hash_text(joined)));
  return 0;
}

// ---------------------------------------------------------------- regpath

struct RegpathCliOptions {
  SpecOptions spec{"sem_C", {}};
  std::string data;  // overrides the spec when set
  std::size_t n = 30;  // per environment
  std::uint64_t replicate = 0;
  int folds = 10;
  int n_lambda = 50;
  double ratio = 1e-3;
  bool scale = true;
  bool no_center = false;
  std::string plot_data;
};

inline std::string path_csv(const RegPath& path) {
  const auto p = path.betas.cols();
  std::string s = "lambda,cv_score";
  for (Eigen::Index k = 1; k <= p; ++k) s += ",beta_" + std::to_string(k);
  s += ",status\n";
  for (std::size_t i = 0; i < path.lambdas.size(); ++i) {
    s += format_number(path.lambdas[i]) + "," + (path.cv_scores ? format_number((*path.cv_scores)[i]) : "");
    for (Eigen::Index k = 0; k < p; ++k) s += "," + format_number(path.betas(static_cast<Eigen::Index>(i), k));
    s += "," + to_string(path.statuses[i]) + "\n";
  }
  if (path.chosen_lambda()) s += "# lambda_cv=" + format_number(*path.chosen_lambda()) + "\n";
  return s;
}

/// One polyline per coefficient over log10(lambda), for plotting paths.
inline std::string path_plot_data(const RegPath& path) {
  std::string s = "coefficient,log10_lambda,beta\n";
  for (Eigen::Index k = 0; k < path.betas.cols(); ++k) {
    for (std::size_t i = 0; i < path.lambdas.size(); ++i) {
      if (!(path.lambdas[i] > 0.0)) continue;
      s += std::to_string(k + 1) + "," + format_number(std::log10(path.lambdas[i])) + "," +
           format_number(path.betas(static_cast<Eigen::Index>(i), k)) + "\n";
    }
  }
  if (path.chosen_lambda() && *path.chosen_lambda() > 0.0) {
    s += "# log10_lambda_cv=" + format_number(std::log10(*path.chosen_lambda())) + "\n";
  }
  return s;
}

inline int cmd_regpath(const GlobalOptions& g, const RegpathCliOptions& opt, std::ostream& out) {
  std::vector<EnvDataset> envs;
  std::string hash;
  if (!opt.data.empty()) {
    const std::string text = read_file(opt.data);
    envs = datasets_from_csv(text);
    if (envs.size() < 2) throw ValidationError(ValidationKind::dimension, "need at least two environments");
    hash = hash_text(text);
  } else {
    const SemSpec spec = load_spec(opt.spec);
    envs = simulate_all(SemSampler(spec), opt.n, g.seed, opt.replicate);
    hash = spec_hash(spec);
  }
  CvOptions cv;
  cv.folds = opt.folds;
  cv.seed = g.seed;
  cv.center = !opt.no_center;
  cv.scale = opt.scale;
  cv.threads = g.threads;
  const GramShift full = prepare_gram(envs, {cv.center, cv.scale});
  const RegPath path = cross_validate(envs, lambda_grid(full, opt.n_lambda, opt.ratio), cv);
  emit(g, out, path_csv(path) + provenance_line(g.seed, hash));
  if (!opt.plot_data.empty()) write_file(opt.plot_data, path_plot_data(path) + provenance_line(g.seed, hash));
  return 0;
}

// ---------------------------------------------------------------- ccif / identifiability

struct CcifCliOptions {
  std::string gram;
  std::string support;  // 1-based comma list
  std::string q = "inf";
  int max_enumeration = 16;
};

inline int cmd_ccif(const GlobalOptions& g, const CcifCliOptions& opt, std::ostream& out) {
  const GramShift gram = gram_from_json(parse_json_text(read_file(opt.gram), opt.gram));
  const auto s = parse_index_list(opt.support, gram.p);
  if (s.empty()) throw ValidationError(ValidationKind::bad_value, "support S must be non-empty");
  double q = 0.0;
  if (opt.q == "inf" || opt.q == "Inf" || opt.q == "infinity") {
    q = std::numeric_limits<double>::infinity();
  } else if (opt.q == "1") {
    q = 1.0;
  } else {
    throw ValidationError(ValidationKind::bad_value, "q must be 1 or inf");
  }
  std::vector<Matrix> gs;
  for (const auto& pair : gram.per_env) gs.push_back(pair.G);
  CcifOptions co;
  co.max_enumeration = opt.max_enumeration;
  co.threads = g.threads;
  emit(g, out, format_number(ccif(gs, s, q, co)) + "\n");
  return 0;
}

struct IdentifiabilityCliOptions {
  SpecOptions spec;
};

inline int cmd_identifiability(const GlobalOptions& g, const IdentifiabilityCliOptions& opt, std::ostream& out) {
  const auto report = check_identifiability(load_spec(opt.spec));
  std::string s = "verdict: " + to_string(report.verdict) + "\n";
  if (report.witness) s += "witness: X" + std::to_string(*report.witness + 1) + "\n";
  if (!report.explanation.empty()) s += "explanation: " + report.explanation + "\n";
  emit(g, out, s);
  return 0;
}

}  // namespace cdantzig::cli

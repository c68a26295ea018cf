#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace cdantzig;
using namespace cdantzig::cli;

/// Reads --config files as JSON: top-level keys are global options, nested
/// objects hold subcommand options, arrays give repeated values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConversionError("writing JSON configs is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json j;
    try {
      j = Json::parse(input);
    } catch (const Json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) return format_number(v.get<double>());
    throw CLI::ConversionError("unsupported config value " + v.dump());
  }

  static void collect(const Json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        // opening marker so CLI11 enters the subcommand
        CLI::ConfigItem open;
        open.parents = next;
        open.name = "++";
        items.push_back(open);
        collect(value, next, items);
        CLI::ConfigItem close;
        close.parents = next;
        close.name = "--";
        items.push_back(close);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

void add_spec_options(CLI::App* cmd, SpecOptions& s, bool required) {
  auto* o = cmd->add_option("--spec", s.spec, "builtin name (sem_example, sem_A, sem_B, sem_C, iv_strong, iv_weak) or SemSpec JSON file");
  if (required) o->required();
  cmd->add_option("--p", s.params.p, "sem_C: number of predictors")->capture_default_str();
  cmd->add_option("--sigma", s.params.sigma, "sem_C: intervention standard deviation")->capture_default_str();
  cmd->add_option("--kappa", s.params.kappa, "sem_A/sem_B: intervention strength")->capture_default_str();
  cmd->add_option("--loading-seed", s.params.loading_seed, "sem_A/sem_B: factor loading seed")->capture_default_str();
  cmd->add_option("--hidden-dim", s.params.hidden_dim, "sem_A/sem_B: number of hidden factors")->capture_default_str();
  cmd->add_option("--example-noise-var", s.params.example_noise_var,
                  "sem_example: predictor noise variance in environment 2")->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"Causal Dantzig estimation and simulation studies"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out", g.out, "output file (default: stdout)");
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::Range(1u, 1024u));

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate every environment of a spec to CSV");
  add_spec_options(c_sim, sim.spec, true);
  c_sim->add_option("--n", sim.n, "samples per environment")->required();
  c_sim->add_option("--replicate", sim.replicate, "replicate index")->capture_default_str();

  FitOptions fit;
  double lambda = 0.0;
  auto* c_fit = app.add_subcommand("fit", "fit the causal Dantzig to a dataset CSV or gram JSON");
  c_fit->add_option("data", fit.data, "dataset CSV");
  c_fit->add_option("--from-gram", fit.from_gram, "gram JSON instead of data");
  c_fit->add_flag("--regularized", fit.regularized, "regularized estimator (LP)");
  auto* o_lambda = c_fit->add_option("--lambda", lambda, "regularization parameter");
  double lambda_c = 0.0;
  auto* o_theory = c_fit->add_option("--lambda-theory", lambda_c, "lambda = 5 C sqrt(log p / min n) for this C");
  c_fit->add_flag("--cv", fit.cv, "choose lambda by cross-validation (default with --regularized)");
  c_fit->add_option("--folds", fit.folds, "cross-validation folds")->capture_default_str();
  c_fit->add_flag("--scale", fit.scale, "rescale the gram rows");
  c_fit->add_flag("--no-center", fit.no_center, "skip global centering");
  c_fit->add_option("--alpha", fit.alpha, "confidence level 1 - alpha")->capture_default_str();
  c_fit->add_flag("--json", fit.json, "print JSON instead of the table");
  c_fit->add_option("--save-gram", fit.save_gram, "write the gram of the data to this JSON file");

  PreselectCliOptions pre;
  std::string observational;
  auto* c_pre = app.add_subcommand("preselect", "Lasso preselection of the active set");
  c_pre->add_option("data", pre.data, "dataset CSV")->required();
  auto* o_obs = c_pre->add_option("--observational", observational, "run the Lasso on this environment only");
  c_pre->add_option("--folds", pre.folds, "cross-validation folds")->capture_default_str();
  c_pre->add_flag("--fit", pre.fit, "also fit the causal Dantzig on the selected columns");
  c_pre->add_flag("--regularized", pre.regularized, "regularized second stage");

  CoverageCliOptions cov;
  auto* c_cov = app.add_subcommand("coverage-study", "coverage and length of confidence intervals");
  add_spec_options(c_cov, cov.spec, false);
  c_cov->add_option("--n", cov.n_totals, "total sample sizes (split equally)")->capture_default_str();
  c_cov->add_option("--reps", cov.replicates, "replicates")->capture_default_str();
  c_cov->add_option("--alpha", cov.alpha, "confidence level 1 - alpha")->capture_default_str();
  c_cov->add_option("--target", cov.target, "coefficient (1-based)")->capture_default_str();

  IvCliOptions iv;
  auto* c_iv = app.add_subcommand("iv-compare", "causal Dantzig vs the Wald estimator");
  c_iv->add_option("--models", iv.models, "builtin IV specs")->capture_default_str();
  c_iv->add_option("--n", iv.n_per_env, "samples per environment")->capture_default_str();
  c_iv->add_option("--reps", iv.replicates, "replicates")->capture_default_str();

  RegpathCliOptions rp;
  auto* c_rp = app.add_subcommand("regpath", "cross-validated regularization path");
  add_spec_options(c_rp, rp.spec, false);
  c_rp->add_option("--data", rp.data, "dataset CSV (instead of simulating)");
  c_rp->add_option("--n", rp.n, "samples per environment")->capture_default_str();
  c_rp->add_option("--replicate", rp.replicate, "replicate index")->capture_default_str();
  c_rp->add_option("--folds", rp.folds, "cross-validation folds")->capture_default_str();
  c_rp->add_option("--n-lambda", rp.n_lambda, "grid size")->capture_default_str();
  c_rp->add_option("--ratio", rp.ratio, "lambda_min / lambda_max")->capture_default_str();
  bool no_scale = false;
  c_rp->add_flag("--no-scale", no_scale, "skip gram scaling");
  c_rp->add_flag("--no-center", rp.no_center, "skip global centering");
  c_rp->add_option("--plot-data", rp.plot_data, "write path polylines to this file");

  CcifCliOptions cc;
  auto* c_cc = app.add_subcommand("ccif", "cone invertibility factor of a gram");
  c_cc->add_option("gram", cc.gram, "gram JSON")->required();
  c_cc->add_option("--support", cc.support, "S as a 1-based comma list")->required();
  c_cc->add_option("--q", cc.q, "1 or inf")->capture_default_str();
  c_cc->add_option("--max-enumeration", cc.max_enumeration, "enumeration limit")->capture_default_str();

  IdentifiabilityCliOptions id;
  auto* c_id = app.add_subcommand("identifiability", "check the identifiability condition of a spec");
  add_spec_options(c_id, id.spec, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (o_lambda->count() > 0) fit.lambda = lambda;
  if (o_theory->count() > 0) fit.lambda_theory = lambda_c;
  if (o_obs->count() > 0) pre.observational = observational;
  rp.scale = !no_scale;

  if (c_sim->parsed()) return cmd_simulate(g, sim, std::cout);
  if (c_fit->parsed()) return cmd_fit(g, fit, std::cout);
  if (c_pre->parsed()) return cmd_preselect(g, pre, std::cout);
  if (c_cov->parsed()) return cmd_coverage_study(g, cov, std::cout);
  if (c_iv->parsed()) return cmd_iv_compare(g, iv, std::cout);
  if (c_rp->parsed()) return cmd_regpath(g, rp, std::cout);
  if (c_cc->parsed()) return cmd_ccif(g, cc, std::cout);
  if (c_id->parsed()) return cmd_identifiability(g, id, std::cout);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cdantzig::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cdantzig::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cdantzig::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

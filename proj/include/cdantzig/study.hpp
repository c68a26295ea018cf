#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "builtins.hpp"
#include "dantzig.hpp"
#include "diagnostics.hpp"
#include "parallel.hpp"
#include "regularized.hpp"
#include "sem.hpp"

namespace cdantzig {

/// Seed for one named sub-study, so that different studies sharing a master
/// seed do not reuse the same noise.
inline std::uint64_t study_seed(std::uint64_t master, std::string_view name) {
  return mix64(master ^ mix64(fnv1a(name)));
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  double se = 0.0;  // sd / sqrt(count)
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

/// Mean after discarding the largest ceil(fraction * count) values.
inline double trimmed_mean(std::vector<double> xs, double fraction) {
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  const auto drop = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(xs.size())));
  const std::size_t keep = xs.size() - std::min(drop, xs.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += xs[i];
  return sum / static_cast<double>(keep);
}

// ---------------------------------------------------------------- coverage

struct CoverageConfig {
  int target = 0;  // 0-based coefficient index
  std::vector<std::size_t> n_totals{500, 1000};
  std::size_t replicates = 500;
  std::uint64_t seed = 20240801;
  double alpha = 0.05;
  unsigned threads = 1;
  bool center = true;
};

struct CoverageRow {
  std::size_t n_total = 0;
  std::size_t replicates = 0;
  std::size_t failures = 0;  // singular G
  double coverage = 0.0;
  double coverage_se = 0.0;  // binomial
  double avg_length = 0.0;
  double length_sd = 0.0;
  double length_se = 0.0;
};

/// Per replicate: simulate n_total split equally over the environments, fit
/// the closed form, record whether the (1 - alpha) interval for the target
/// coefficient contains the truth and its length.
inline std::vector<CoverageRow> coverage_study(const SemSpec& spec, const CoverageConfig& cfg) {
  const SemSampler sampler(spec);
  if (spec.environments.size() != 2) throw ValidationError(ValidationKind::dimension, "coverage study needs two environments");
  if (cfg.target < 0 || cfg.target >= spec.p) throw ValidationError(ValidationKind::dimension, "target index out of range");
  if (cfg.replicates < 1) throw ValidationError(ValidationKind::bad_value, "need at least one replicate");
  const auto ident = check_identifiability(spec);
  if (ident.verdict == Identifiability::not_identifiable) {
    throw ValidationError(ValidationKind::bad_value, "spec is not identifiable: " + ident.explanation);
  }
  const double truth = true_beta(spec)(cfg.target);
  std::vector<CoverageRow> rows;
  for (std::size_t n_total : cfg.n_totals) {
    const std::size_t n_env = n_total / spec.environments.size();
    std::vector<int> covered(cfg.replicates, -1);
    std::vector<double> length(cfg.replicates, 0.0);
    parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
      const auto envs = simulate_all(sampler, n_env, cfg.seed, r);
      try {
        const DantzigFit fit = fit_unregularized(envs[0], envs[1], cfg.center);
        const auto ci = confidence_intervals(fit, cfg.alpha)[static_cast<std::size_t>(cfg.target)];
        covered[r] = ci.lower <= truth && truth <= ci.upper ? 1 : 0;
        length[r] = ci.upper - ci.lower;
      } catch (const NumericalError&) {
        covered[r] = -1;
      }
    });
    CoverageRow row;
    row.n_total = n_total;
    std::vector<double> hits, lengths;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      if (covered[r] < 0) {
        ++row.failures;
        continue;
      }
      hits.push_back(covered[r]);
      lengths.push_back(length[r]);
    }
    row.replicates = hits.size();
    const Summary h = summarize(hits);
    const Summary l = summarize(lengths);
    row.coverage = h.mean;
    row.coverage_se = hits.empty() ? 0.0 : std::sqrt(h.mean * (1.0 - h.mean) / static_cast<double>(hits.size()));
    row.avg_length = l.mean;
    row.length_sd = l.sd;
    row.length_se = l.se;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------- IV comparison

struct IvConfig {
  std::vector<std::string> models{"iv_strong", "iv_weak"};
  std::vector<std::size_t> n_per_env{20, 50, 100};
  std::size_t replicates = 500;
  std::uint64_t seed = 20240801;
  unsigned threads = 1;
  double trim = 0.01;
};

struct IvRow {
  std::string model;
  std::size_t n_per_env = 0;
  Summary se_dantzig;  // squared errors of the causal Dantzig estimate
  Summary se_wald;
  double trimmed_dantzig = 0.0;
  double trimmed_wald = 0.0;
  std::size_t dantzig_failures = 0;
  std::size_t wald_failures = 0;
};

/// Squared errors of the uncentred closed-form causal Dantzig estimate and
/// the Wald ratio. Global centering is off here: with two environments it
/// removes a pure mean shift from G entirely.
inline std::vector<IvRow> iv_compare(const IvConfig& cfg) {
  std::vector<IvRow> rows;
  for (const auto& model : cfg.models) {
    const SemSpec spec = builtin_spec(model);
    if (spec.p != 1) throw ValidationError(ValidationKind::dimension, "IV comparison needs p = 1");
    const SemSampler sampler(spec);
    const double truth = true_beta(spec)(0);
    const std::uint64_t seed = study_seed(cfg.seed, "iv_compare:" + model);
    for (std::size_t n : cfg.n_per_env) {
      std::vector<double> d(cfg.replicates, -1.0), w(cfg.replicates, -1.0);
      parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
        const auto envs = simulate_all(sampler, n, seed, r);
        try {
          const GramShift g = prepare_gram(envs, {false, false});
          const double b = fit_closed_form(g).beta(0);
          d[r] = (b - truth) * (b - truth);
        } catch (const NumericalError&) {
        }
        try {
          const double b = wald_iv(envs[0], envs[1]);
          w[r] = (b - truth) * (b - truth);
        } catch (const NumericalError&) {
        }
      });
      IvRow row;
      row.model = model;
      row.n_per_env = n;
      std::vector<double> ds, ws;
      for (std::size_t r = 0; r < cfg.replicates; ++r) {
        if (d[r] >= 0.0) ds.push_back(d[r]); else ++row.dantzig_failures;
        if (w[r] >= 0.0) ws.push_back(w[r]); else ++row.wald_failures;
      }
      row.se_dantzig = summarize(ds);
      row.se_wald = summarize(ws);
      row.trimmed_dantzig = trimmed_mean(ds, cfg.trim);
      row.trimmed_wald = trimmed_mean(ws, cfg.trim);
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------- regularization paths

struct RegpathRun {
  RegPath path;
  Vector beta_cv;
  double error_inf = 0.0;  // ||beta_cv - beta0||_inf
};

/// Simulates n_per_env rows per environment (replicate r) and runs the
/// cross-validated regularized estimator.
inline RegpathRun regpath_run(const SemSampler& sampler, std::size_t n_per_env, std::uint64_t seed, std::uint64_t replicate,
                              const CvOptions& cv, int n_lambda = 50, double ratio = 1e-3) {
  const auto envs = simulate_all(sampler, n_per_env, seed, replicate);
  std::vector<EnvDataset> centered;
  const GramShift full = prepare_gram(envs, {cv.center, cv.scale}, &centered);
  RegpathRun out;
  out.path = cross_validate(envs, lambda_grid(full, n_lambda, ratio), cv);
  out.beta_cv = out.path.chosen_beta();
  out.error_inf = norm_inf(out.beta_cv - true_beta(sampler.spec()));
  return out;
}

}  // namespace cdantzig

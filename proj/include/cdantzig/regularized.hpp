#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dantzig.hpp"
#include "errors.hpp"
#include "gram.hpp"
#include "lp.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cdantzig {

inline constexpr double kActiveThreshold = 1e-7;

struct RegFit {
  Vector beta;  // zero vector when the LP is infeasible
  LpStatus status = LpStatus::optimal;
  std::size_t pivots = 0;

  bool feasible() const { return status == LpStatus::optimal; }
};

/// The LP whose solutions gamma give beta = gamma_{1:p} - gamma_{p+1:2p}:
/// minimize 1^T gamma subject to, for every stored pair (Z^e, G^e),
///   [-G  G] gamma <= -Z + lambda,   [G  -G] gamma <= Z + lambda,   gamma >= 0.
inline LpProblem regularized_lp(const GramShift& gram, double lambda) {
  const int p = gram.p;
  const auto blocks = static_cast<Eigen::Index>(gram.per_env.size());
  LpProblem lp;
  lp.c = Vector::Ones(2 * p);
  lp.A_ub.resize(2 * p * blocks, 2 * p);
  lp.b_ub.resize(2 * p * blocks);
  for (Eigen::Index e = 0; e < blocks; ++e) {
    const auto& pair = gram.per_env[static_cast<std::size_t>(e)];
    const Eigen::Index top = 2 * p * e;
    lp.A_ub.block(top, 0, p, p) = -pair.G;
    lp.A_ub.block(top, p, p, p) = pair.G;
    lp.A_ub.block(top + p, 0, p, p) = pair.G;
    lp.A_ub.block(top + p, p, p, p) = -pair.G;
    lp.b_ub.segment(top, p) = (-pair.Z).array() + lambda;
    lp.b_ub.segment(top + p, p) = pair.Z.array() + lambda;
  }
  return lp;
}

/// Minimum-l1 beta with max_e ||Z^e - G^e beta||_inf <= lambda.
inline RegFit fit_regularized(const GramShift& gram, double lambda, const LpOptions& opt = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError(ValidationKind::bad_value, "lambda must be finite and non-negative");
  }
  const LpResult res = solve_lp(regularized_lp(gram, lambda), opt);
  RegFit out;
  out.status = res.status;
  out.pivots = res.pivots;
  if (res.status == LpStatus::optimal) {
    out.beta = res.x.head(gram.p) - res.x.tail(gram.p);
  } else {
    out.beta = Vector::Zero(gram.p);
  }
  return out;
}

/// max_e ||Z^e||_inf, the smallest lambda at which beta = 0.
inline double lambda_max(const GramShift& gram) {
  double out = 0.0;
  for (const auto& pair : gram.per_env) out = std::max(out, norm_inf(pair.Z));
  return out;
}

/// n_points values log-spaced from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_grid(const GramShift& gram, int n_points = 50, double ratio = 1e-3) {
  if (n_points < 2) throw ValidationError(ValidationKind::bad_value, "lambda grid needs at least two points");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError(ValidationKind::bad_value, "ratio must lie in (0, 1)");
  const double top = lambda_max(gram);
  if (!(top > 0.0)) throw ValidationError(ValidationKind::bad_value, "all Z are zero; lambda_max = 0");
  std::vector<double> out(static_cast<std::size_t>(n_points));
  const double step = std::log(ratio) / (n_points - 1);
  out.front() = top;
  for (int k = 1; k + 1 < n_points; ++k) out[k] = top * std::exp(step * k);
  out.back() = top * ratio;
  return out;
}

/// 5 C sqrt(log p / min_e n_e).
inline double lambda_theory(double c, int p, std::size_t min_n) {
  if (!(c > 0.0) || min_n == 0 || p < 1) throw ValidationError(ValidationKind::bad_value, "invalid theory lambda input");
  return 5.0 * c * std::sqrt(std::log(static_cast<double>(std::max(p, 2))) / static_cast<double>(min_n));
}

struct RegPath {
  std::vector<double> lambdas;
  Matrix betas;  // one row per lambda
  std::vector<LpStatus> statuses;
  std::optional<std::vector<double>> cv_scores;
  std::optional<std::size_t> chosen_index;

  std::optional<double> chosen_lambda() const {
    if (!chosen_index) return std::nullopt;
    return lambdas[*chosen_index];
  }
  Vector chosen_beta() const {
    if (!chosen_index) throw ValidationError(ValidationKind::bad_value, "path has no chosen lambda");
    return betas.row(static_cast<Eigen::Index>(*chosen_index)).transpose();
  }
};

inline void check_grid(const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ValidationError(ValidationKind::bad_value, "empty lambda grid");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i])) {
      throw ValidationError(ValidationKind::bad_value, "lambda values must be finite and non-negative");
    }
    if (i > 0 && !(lambdas[i] < lambdas[i - 1])) {
      throw ValidationError(ValidationKind::bad_value, "lambda grid must be strictly decreasing");
    }
  }
}

inline RegPath compute_path(const GramShift& gram, const std::vector<double>& lambdas, unsigned threads = 1,
                            const LpOptions& opt = {}) {
  check_grid(lambdas);
  RegPath path;
  path.lambdas = lambdas;
  path.betas.resize(static_cast<Eigen::Index>(lambdas.size()), gram.p);
  path.statuses.resize(lambdas.size());
  parallel_for(lambdas.size(), threads, [&](std::size_t i) {
    const RegFit fit = fit_regularized(gram, lambdas[i], opt);
    path.betas.row(static_cast<Eigen::Index>(i)) = fit.beta.transpose();
    path.statuses[i] = fit.status;
  });
  return path;
}

/// Indices k with |beta_k| > threshold.
inline std::vector<int> active_set(const Vector& beta, double threshold = kActiveThreshold) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    if (std::fabs(beta(k)) > threshold) out.push_back(static_cast<int>(k));
  }
  return out;
}

struct CvOptions {
  int folds = 10;
  std::uint64_t seed = 0;
  bool center = true;
  bool scale = true;
  unsigned threads = 1;
  LpOptions lp;
};

/// Index of the smallest score; ties within 1e-10 go to the earliest entry,
/// i.e. the largest lambda of a decreasing grid.
inline std::size_t choose_lambda_index(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  if (!std::isfinite(scores[best])) {
    throw NumericalError("every lambda is infeasible on some fold");
  }
  for (std::size_t i = 0; i < best; ++i) {
    if (scores[i] <= scores[best] + 1e-10) return i;
  }
  return best;
}

/// Fold index (0..k-1) for each row of one environment: a deterministic
/// shuffle seeded by (seed, label), then round-robin.
inline std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed, const std::string& label) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(derive_stream_key(seed, "cv_folds:" + label, 0));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
  std::vector<int> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  return fold;
}

namespace detail {

inline GramShift gram_from_parts(const std::vector<CrossProducts>& cps, const std::vector<std::string>& labels,
                                 bool scale) {
  GramShift g = gram_from_cross_products(cps, labels);
  if (scale) {
    std::vector<Vector> moments;
    for (const auto& cp : cps) moments.push_back(cp.xx.diagonal() / static_cast<double>(cp.n));
    g = apply_scaling(std::move(g), moments);
  }
  return g;
}

}  // namespace detail

/// k-fold cross-validation over a lambda grid. Data are centred globally once;
/// for fold i the estimator is fitted on the gram of the remaining folds and
/// scored by max_e ||Z^{i,e} - G^{i,e} beta||_inf on the gram of fold i alone,
/// averaged over folds. The returned path holds the full-data fits.
inline RegPath cross_validate(std::span<const EnvDataset> envs, std::vector<double> lambdas, const CvOptions& opt) {
  if (envs.size() < 2) throw ValidationError(ValidationKind::dimension, "need at least two environments");
  if (opt.folds < 2) throw ValidationError(ValidationKind::bad_value, "need at least two folds");
  for (const auto& e : envs) {
    if (e.n() < static_cast<std::size_t>(opt.folds)) {
      throw ValidationError(ValidationKind::dimension,
                            "environment " + e.env_label + " has fewer samples than folds");
    }
  }
  std::vector<EnvDataset> data;
  if (opt.center) {
    data = center_datasets(envs).envs;
  } else {
    data.assign(envs.begin(), envs.end());
  }
  const int k = opt.folds;
  std::vector<std::string> labels;
  // parts[e][i]: cross products of fold i in environment e.
  std::vector<std::vector<CrossProducts>> parts(data.size());
  for (std::size_t e = 0; e < data.size(); ++e) {
    labels.push_back(data[e].env_label);
    const auto fold = fold_assignment(data[e].n(), k, opt.seed, data[e].env_label);
    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < fold.size(); ++r) rows[static_cast<std::size_t>(fold[r])].push_back(r);
    parts[e].resize(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), opt.threads,
                 [&](std::size_t i) { parts[e][i] = cross_products(data[e], rows[i]); });
  }

  std::vector<CrossProducts> full_parts;
  for (std::size_t e = 0; e < data.size(); ++e) full_parts.push_back(combine(parts[e]));
  GramShift full = detail::gram_from_parts(full_parts, labels, opt.scale);
  if (lambdas.empty()) lambdas = lambda_grid(full);
  check_grid(lambdas);

  std::vector<GramShift> train, test;
  for (int i = 0; i < k; ++i) {
    std::vector<CrossProducts> tr, te;
    for (std::size_t e = 0; e < data.size(); ++e) {
      std::vector<CrossProducts> others;
      for (int j = 0; j < k; ++j) {
        if (j != i) others.push_back(parts[e][static_cast<std::size_t>(j)]);
      }
      tr.push_back(combine(others));
      te.push_back(parts[e][static_cast<std::size_t>(i)]);
    }
    train.push_back(detail::gram_from_parts(tr, labels, opt.scale));
    test.push_back(detail::gram_from_parts(te, labels, opt.scale));
  }

  const std::size_t n_lambda = lambdas.size();
  std::vector<double> fold_scores(static_cast<std::size_t>(k) * n_lambda);
  parallel_for(fold_scores.size(), opt.threads, [&](std::size_t task) {
    const std::size_t i = task / n_lambda;
    const std::size_t l = task % n_lambda;
    const RegFit fit = fit_regularized(train[i], lambdas[l], opt.lp);
    double score = std::numeric_limits<double>::infinity();
    if (fit.feasible()) {
      score = 0.0;
      for (const auto& pair : test[i].per_env) score = std::max(score, norm_inf(pair.Z - pair.G * fit.beta));
    }
    fold_scores[task] = score;
  });

  std::vector<double> scores(n_lambda, 0.0);
  for (std::size_t l = 0; l < n_lambda; ++l) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += fold_scores[static_cast<std::size_t>(i) * n_lambda + l];
    scores[l] = sum / k;
  }

  RegPath path = compute_path(full, lambdas, opt.threads, opt.lp);
  path.chosen_index = choose_lambda_index(scores);
  path.cv_scores = std::move(scores);
  return path;
}

/// Regularized fit at the cross-validated lambda.
inline DantzigFit fit_cross_validated(std::span<const EnvDataset> envs, const CvOptions& opt,
                                      RegPath* path_out = nullptr, std::vector<double> lambdas = {}) {
  RegPath path = cross_validate(envs, std::move(lambdas), opt);
  DantzigFit fit;
  fit.method = "regularized";
  fit.beta = path.chosen_beta();
  fit.lambda = path.chosen_lambda();
  if (path_out) *path_out = std::move(path);
  return fit;
}

}  // namespace cdantzig

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dantzig.hpp"
#include "errors.hpp"
#include "gram.hpp"
#include "linalg.hpp"
#include "regularized.hpp"
#include "sem.hpp"

namespace cdantzig {

/// (mean(Y1) - mean(Y2)) / (mean(X1) - mean(X2)) for a single predictor.
inline double wald_iv(const EnvDataset& env1, const EnvDataset& env2) {
  if (env1.p() != 1 || env2.p() != 1) throw ValidationError(ValidationKind::dimension, "the Wald estimator needs p = 1");
  if (env1.n() == 0 || env2.n() == 0) throw ValidationError(ValidationKind::dimension, "empty environment");
  const double dx = env1.X.col(0).mean() - env2.X.col(0).mean();
  if (!(std::fabs(dx) > 1e-12)) {
    throw DegenerateInstrumentError("instrument does not shift the mean of X; Wald ratio undefined");
  }
  return (env1.Y.mean() - env2.Y.mean()) / dx;
}

inline EnvDataset pool(std::span<const EnvDataset> envs, const std::string& label = "pooled") {
  if (envs.empty()) throw ValidationError(ValidationKind::dimension, "no environments");
  const int p = envs.front().p();
  Eigen::Index rows = 0;
  for (const auto& e : envs) {
    if (e.p() != p) throw ValidationError(ValidationKind::dimension, "environments disagree on p");
    rows += static_cast<Eigen::Index>(e.n());
  }
  EnvDataset out;
  out.env_label = label;
  out.X.resize(rows, p);
  out.Y.resize(rows);
  Eigen::Index at = 0;
  for (const auto& e : envs) {
    const auto n = static_cast<Eigen::Index>(e.n());
    out.X.middleRows(at, n) = e.X;
    out.Y.segment(at, n) = e.Y;
    at += n;
  }
  return out;
}

/// Least squares on the row-concatenated data, no intercept.
inline Vector ols_pooled(std::span<const EnvDataset> envs) {
  const EnvDataset all = pool(envs);
  const Matrix xtx = all.X.transpose() * all.X;
  const double cond = condition_number(xtx);
  if (!(cond <= 1e12)) throw SingularGramError(cond, "pooled X^T X is rank deficient");
  return xtx.ldlt().solve(all.X.transpose() * all.Y);
}

struct LassoOptions {
  double tol = 1e-7;
  std::size_t max_iter = 100000;
};

struct LassoFit {
  Vector beta;
  std::size_t iterations = 0;
};

/// Cyclic coordinate descent for (1/2n) ||y - X b||^2 + lambda ||b||_1,
/// optionally warm-started.
inline LassoFit lasso_cd(const Matrix& x, const Vector& y, double lambda, const LassoOptions& opt = {},
                         const Vector* start = nullptr) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::Index p = x.cols();
  if (x.rows() == 0) throw ValidationError(ValidationKind::dimension, "lasso needs data");
  if (!(lambda >= 0.0)) throw ValidationError(ValidationKind::bad_value, "lambda must be non-negative");
  const Vector norms = x.colwise().squaredNorm().transpose() / n;
  LassoFit fit;
  fit.beta = start ? *start : Vector::Zero(p);
  Vector r = y - x * fit.beta;
  for (fit.iterations = 1; fit.iterations <= opt.max_iter; ++fit.iterations) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (norms(j) == 0.0) continue;
      const double old = fit.beta(j);
      const double rho = x.col(j).dot(r) / n + norms(j) * old;
      const double next = (rho > lambda ? rho - lambda : (rho < -lambda ? rho + lambda : 0.0)) / norms(j);
      if (next != old) {
        r -= (next - old) * x.col(j);
        fit.beta(j) = next;
        change = std::max(change, std::fabs(next - old));
      }
    }
    if (change < opt.tol) return fit;
  }
  throw NonConvergenceError("lasso coordinate descent did not converge");
}

struct ActiveSet {
  std::vector<int> indices;  // 0-based, sorted
  Vector coefficients;       // on the original scale, at `indices`
  double lambda = 0.0;       // on the standardized scale
};

struct PreselectOptions {
  std::vector<double> lambdas;  // standardized scale; empty: 50 points over 3 decades
  int folds = 10;
  std::uint64_t seed = 0;
  /// Use only this environment when set, all environments otherwise.
  std::optional<std::string> observational_label;
  LassoOptions lasso;
};

/// Lasso on standardized predictors (pooled, or observational only), lambda by
/// k-fold cross-validation on squared prediction error; largest lambda wins ties.
inline ActiveSet lasso_preselect(std::span<const EnvDataset> envs, const PreselectOptions& opt) {
  std::vector<EnvDataset> source;
  if (opt.observational_label) {
    for (const auto& e : envs) {
      if (e.env_label == *opt.observational_label) source.push_back(e);
    }
    if (source.empty()) {
      throw ValidationError(ValidationKind::unknown_environment, "no environment labelled " + *opt.observational_label);
    }
  } else {
    source.assign(envs.begin(), envs.end());
  }
  const EnvDataset data = pool(source);
  const auto n = static_cast<Eigen::Index>(data.n());
  const int p = data.p();
  if (n < opt.folds || opt.folds < 2) throw ValidationError(ValidationKind::dimension, "too few samples for the folds");

  const Vector mean = data.X.colwise().mean().transpose();
  Matrix x = data.X.rowwise() - mean.transpose();
  const Vector sd = (x.colwise().squaredNorm().transpose() / static_cast<double>(n)).cwiseSqrt();
  for (int j = 0; j < p; ++j) {
    if (!(sd(j) > 1e-12)) throw ValidationError(ValidationKind::bad_value, "constant column X" + std::to_string(j + 1));
  }
  x = x * sd.cwiseInverse().asDiagonal();
  const Vector y = data.Y.array() - data.Y.mean();

  std::vector<double> lambdas = opt.lambdas;
  if (lambdas.empty()) {
    const double top = norm_inf(x.transpose() * y) / static_cast<double>(n);
    if (!(top > 0.0)) throw ValidationError(ValidationKind::bad_value, "response is orthogonal to every predictor");
    const int points = 50;
    for (int k = 0; k < points; ++k) lambdas.push_back(top * std::pow(1e-3, static_cast<double>(k) / (points - 1)));
  }
  check_grid(lambdas);

  const auto fold = fold_assignment(static_cast<std::size_t>(n), opt.folds, opt.seed, "lasso:" + data.env_label);
  std::vector<double> scores(lambdas.size(), 0.0);
  for (int i = 0; i < opt.folds; ++i) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index r = 0; r < n; ++r) (fold[static_cast<std::size_t>(r)] == i ? te : tr).push_back(r);
    const Matrix xtr = x(tr, Eigen::all);
    const Vector ytr = y(tr);
    const Matrix xte = x(te, Eigen::all);
    const Vector yte = y(te);
    Vector warm = Vector::Zero(p);
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      warm = lasso_cd(xtr, ytr, lambdas[l], opt.lasso, &warm).beta;
      scores[l] += (yte - xte * warm).squaredNorm();
    }
  }
  std::size_t best = 0;
  for (std::size_t l = 1; l < scores.size(); ++l) {
    if (scores[l] < scores[best]) best = l;
  }
  for (std::size_t l = 0; l < best; ++l) {
    if (scores[l] <= scores[best] * (1.0 + 1e-10)) {
      best = l;
      break;
    }
  }
  Vector warm = Vector::Zero(p);
  for (std::size_t l = 0; l <= best; ++l) warm = lasso_cd(x, y, lambdas[l], opt.lasso, &warm).beta;

  ActiveSet out;
  out.lambda = lambdas[best];
  out.indices = active_set(warm, kActiveThreshold);
  out.coefficients.resize(static_cast<Eigen::Index>(out.indices.size()));
  for (std::size_t i = 0; i < out.indices.size(); ++i) {
    out.coefficients(static_cast<Eigen::Index>(i)) = warm(out.indices[i]) / sd(out.indices[i]);
  }
  return out;
}

inline EnvDataset select_columns(const EnvDataset& env, const std::vector<int>& cols) {
  EnvDataset out;
  out.env_label = env.env_label;
  out.X.resize(env.X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.X.col(static_cast<Eigen::Index>(j)) = env.X.col(cols[j]);
  out.Y = env.Y;
  return out;
}

struct TwoStageOptions {
  bool regularized = false;
  CvOptions cv;
};

/// Causal Dantzig on the selected columns, embedded back at the original
/// indices (zero elsewhere). Flagged post-selection: p-values are not valid.
inline DantzigFit two_stage_fit(std::span<const EnvDataset> envs, const std::vector<int>& selected,
                                const TwoStageOptions& opt = {}) {
  if (selected.empty()) throw ValidationError(ValidationKind::bad_value, "empty active set");
  if (envs.empty()) throw ValidationError(ValidationKind::dimension, "no environments");
  const int p = envs.front().p();
  std::vector<int> cols = selected;
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  for (int c : cols) {
    if (c < 0 || c >= p) throw ValidationError(ValidationKind::dimension, "selected column out of range");
  }
  std::vector<EnvDataset> sub;
  for (const auto& e : envs) sub.push_back(select_columns(e, cols));

  DantzigFit inner;
  if (opt.regularized) {
    inner = fit_cross_validated(sub, opt.cv);
  } else if (sub.size() == 2) {
    inner = fit_unregularized(sub[0], sub[1]);
  } else {
    inner = fit_minmax(prepare_gram(sub, {true, false}));
  }
  DantzigFit out;
  out.method = inner.method;
  out.lambda = inner.lambda;
  out.cond_G = inner.cond_G;
  out.post_selection = true;
  out.beta = Vector::Zero(p);
  for (std::size_t j = 0; j < cols.size(); ++j) out.beta(cols[j]) = inner.beta(static_cast<Eigen::Index>(j));
  if (inner.has_covariance()) {
    out.cov = Matrix::Zero(p, p);
    for (std::size_t a = 0; a < cols.size(); ++a) {
      for (std::size_t b = 0; b < cols.size(); ++b) {
        out.cov(cols[a], cols[b]) = inner.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
    out.std_error = Vector::Zero(p);
    out.pvalues = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.std_error(cols[j]) = inner.std_error(static_cast<Eigen::Index>(j));
      out.pvalues(cols[j]) = inner.pvalues(static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

}  // namespace cdantzig

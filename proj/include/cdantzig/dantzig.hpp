#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "gram.hpp"
#include "linalg.hpp"
#include "lp.hpp"
#include "normal.hpp"

namespace cdantzig {

/// Estimate plus (optionally) its asymptotic covariance. std_error and
/// pvalues are empty until estimate_covariance has run.
struct DantzigFit {
  Vector beta;
  Matrix cov;
  Vector std_error;
  Vector pvalues;
  std::string method;  // closed_form, minmax, regularized
  std::optional<double> lambda;
  double cond_G = std::numeric_limits<double>::quiet_NaN();
  bool post_selection = false;

  bool has_covariance() const { return cov.size() > 0; }
};

inline constexpr double kMaxGramCondition = 1e12;

/// beta = G^{-1} Z for the two-environment gram.
inline DantzigFit fit_closed_form(const GramShift& gram, double max_condition = kMaxGramCondition) {
  if (gram.per_env.size() != 1) {
    throw ValidationError(ValidationKind::dimension, "closed form needs the two-environment gram");
  }
  DantzigFit fit;
  fit.method = "closed_form";
  fit.cond_G = condition_number(gram.G());
  if (!(fit.cond_G <= max_condition)) {
    throw SingularGramError(fit.cond_G, "G is singular or ill-conditioned (condition " + std::to_string(fit.cond_G) +
                                            "); beta is not identifiable, try --regularized");
  }
  fit.beta = gram.G().partialPivLu().solve(gram.Z());
  return fit;
}

/// min_beta max_e ||Z^e - G^e beta||_inf.
inline DantzigFit fit_minmax(const GramShift& gram, const LpOptions& opt = {}) {
  std::vector<Vector> zs;
  std::vector<Matrix> gs;
  for (const auto& pair : gram.per_env) {
    zs.push_back(pair.Z);
    gs.push_back(pair.G);
  }
  const MinmaxSolution sol = solve_minmax_linf(zs, gs, opt);
  DantzigFit fit;
  fit.method = "minmax";
  fit.beta = sol.beta;
  if (gram.per_env.size() == 1) fit.cond_G = condition_number(gram.G());
  return fit;
}

namespace detail {

/// Sample covariance (divisor n-1) of the rows x_i r_i, r = y - X beta.
inline Matrix score_covariance(const EnvDataset& env, const Vector& beta) {
  const auto n = static_cast<Eigen::Index>(env.n());
  if (n < 2) throw ValidationError(ValidationKind::dimension, "covariance needs at least two samples per environment");
  const Vector r = env.Y - env.X * beta;
  Matrix u = env.X.array().colwise() * r.array();
  u.rowwise() -= u.colwise().mean();
  return (u.transpose() * u) / static_cast<double>(n - 1);
}

inline void fill_inference(DantzigFit& fit) {
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.std_error = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.pvalues.resize(fit.beta.size());
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    fit.pvalues(k) = fit.std_error(k) > 0.0 ? two_sided_pvalue(fit.beta(k) / fit.std_error(k))
                                            : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// cov = V^1/n_1 + V^2/n_2 where V^e is the empirical covariance of the
/// per-sample vectors G^{-1} x_i^T (y_i - x_i beta). The datasets must be the
/// (centred) data the gram was computed from; any scaling is undone first.
inline DantzigFit estimate_covariance(DantzigFit fit, const EnvDataset& env1, const EnvDataset& env2,
                                      const GramShift& gram) {
  if (gram.per_env.size() != 1) {
    throw ValidationError(ValidationKind::dimension, "covariance needs the two-environment gram");
  }
  const GramShift raw = unscaled(gram);
  if (fit.beta.size() != raw.p || env1.p() != raw.p || env2.p() != raw.p) {
    throw ValidationError(ValidationKind::dimension, "fit, data and gram disagree on p");
  }
  const double cond = condition_number(raw.G());
  if (!(cond <= kMaxGramCondition)) throw SingularGramError(cond, "G is singular; covariance undefined");
  const Eigen::PartialPivLU<Matrix> lu(raw.G());
  const Matrix ginv = lu.inverse();
  const Matrix middle = detail::score_covariance(env1, fit.beta) / static_cast<double>(env1.n()) +
                        detail::score_covariance(env2, fit.beta) / static_cast<double>(env2.n());
  fit.cov = ginv * middle * ginv.transpose();
  detail::fill_inference(fit);
  return fit;
}

struct ConfidenceInterval {
  double lower;
  double upper;
};

/// beta_k +- q sqrt(cov_kk) with q the (1 - alpha/2) normal quantile.
inline std::vector<ConfidenceInterval> confidence_intervals(const DantzigFit& fit, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError(ValidationKind::bad_value, "alpha must lie in (0, 1)");
  if (!fit.has_covariance()) throw ValidationError(ValidationKind::bad_value, "fit has no covariance estimate");
  const double q = normal_quantile(1.0 - alpha / 2.0);
  std::vector<ConfidenceInterval> out;
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    const double v = fit.cov(k, k);
    if (!(v > 0.0)) {
      throw ValidationError(ValidationKind::bad_value, "non-positive variance for coefficient " + std::to_string(k + 1));
    }
    const double half = q * std::sqrt(v);
    out.push_back({fit.beta(k) - half, fit.beta(k) + half});
  }
  return out;
}

/// Sets cov directly and recomputes std_error / pvalues.
inline DantzigFit with_covariance(DantzigFit fit, Matrix cov) {
  fit.cov = std::move(cov);
  detail::fill_inference(fit);
  return fit;
}

/// Centre, form the gram, closed-form fit and covariance for two environments.
inline DantzigFit fit_unregularized(const EnvDataset& env1, const EnvDataset& env2, bool center = true) {
  const EnvDataset pair[] = {env1, env2};
  std::vector<EnvDataset> data;
  const GramShift gram = prepare_gram(pair, {center, false}, &data);
  DantzigFit fit = fit_closed_form(gram);
  return estimate_covariance(std::move(fit), data[0], data[1], gram);
}

inline std::string significance_stars(double p) {
  if (!(p >= 0.0)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

/// Text table in the style of R's coefficient printout.
inline std::string format_fit_table(const DantzigFit& fit, const std::vector<std::string>& names = {}) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  auto pval = [](double v) {
    if (std::isnan(v)) return std::string("NA");
    if (v < 2e-16) return std::string("<2e-16");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
  };
  std::vector<std::string> labels, est, se, pv, stars;
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    labels.push_back(static_cast<std::size_t>(k) < names.size() ? names[k] : "X" + std::to_string(k + 1));
    est.push_back(num(fit.beta(k)));
    if (fit.std_error.size() == fit.beta.size()) {
      se.push_back(num(fit.std_error(k)));
      pv.push_back(pval(fit.pvalues(k)));
      stars.push_back(significance_stars(fit.pvalues(k)));
    }
  }
  auto width = [](const std::vector<std::string>& col, std::size_t w) {
    for (const auto& s : col) w = std::max(w, s.size());
    return w;
  };
  auto pad = [](const std::string& s, std::size_t w) { return std::string(w - std::min(w, s.size()), ' ') + s; };
  const std::size_t wl = width(labels, 0);
  const std::size_t we = width(est, 8);
  const bool inference = !se.empty();
  const std::size_t ws = width(se, 6);
  const std::size_t wp = width(pv, 7);

  std::ostringstream out;
  if (fit.method == "regularized") {
    out << "Regularized causal Dantzig";
    if (fit.lambda) out << " (lambda = " << *fit.lambda << ")";
    out << '\n';
  } else if (fit.method == "minmax") {
    out << "Unregularized causal Dantzig (min-max over environments)\n";
  } else {
    out << "Unregularized causal Dantzig\n";
  }
  out << std::string(wl, ' ') << ' ' << pad("Estimate", we);
  if (inference) out << ' ' << pad("StdErr", ws) << ' ' << pad("p.value", wp);
  out << '\n';
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out << labels[k] << std::string(wl - labels[k].size(), ' ') << ' ' << pad(est[k], we);
    if (inference) {
      out << ' ' << pad(se[k], ws) << ' ' << pad(pv[k], wp);
      if (!stars[k].empty()) out << ' ' << stars[k];
    }
    out << '\n';
  }
  if (inference) {
    out << "---\n";
    out << "Signif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n";
  }
  if (fit.post_selection) out << "post-selection: p-values are not valid\n";
  return out.str();
}

}  // namespace cdantzig

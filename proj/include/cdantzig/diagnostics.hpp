#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gram.hpp"
#include "linalg.hpp"
#include "lp.hpp"
#include "parallel.hpp"
#include "sem.hpp"

namespace cdantzig {

/// E[delta delta^T] of one environment, (p+1) x (p+1).
inline Matrix intervention_moment(const InterventionSpec& env) {
  return env.cov + env.mean_shift * env.mean_shift.transpose();
}

/// Population Gram shift between environments e and f:
/// M_{1:p,1:p} (E[d^e d^e^T] - E[d^f d^f^T])_{1:p,1:p} M_{1:p,1:p}^T, M = (Id - A)^{-1}.
inline Matrix population_gram(const SemSpec& spec, std::string_view e, std::string_view f) {
  const SemSpec s = validate_spec(spec);
  const int p = s.p;
  const Matrix m = structural_inverse(s).topLeftCorner(p, p);
  const Matrix diff = (intervention_moment(s.environment(e)) - intervention_moment(s.environment(f))).topLeftCorner(p, p);
  return m * diff * m.transpose();
}

inline bool is_observational(const InterventionSpec& env) {
  return env.mean_shift.cwiseAbs().maxCoeff() == 0.0 && env.cov.cwiseAbs().maxCoeff() == 0.0;
}

/// Sum over non-observational environments of population_gram(e, observational).
inline Matrix pooled_population_gram(const SemSpec& spec) {
  const SemSpec s = validate_spec(spec);
  const InterventionSpec* obs = nullptr;
  for (const auto& env : s.environments) {
    if (is_observational(env)) {
      obs = &env;
      break;
    }
  }
  if (!obs) throw ValidationError(ValidationKind::bad_value, "spec has no observational environment");
  Matrix out = Matrix::Zero(s.p, s.p);
  for (const auto& env : s.environments) {
    if (&env != obs) out += population_gram(s, env.label, obs->label);
  }
  return out;
}

enum class Identifiability { identifiable, not_identifiable, conditions_not_checked };

inline std::string to_string(Identifiability v) {
  switch (v) {
    case Identifiability::identifiable: return "identifiable";
    case Identifiability::not_identifiable: return "not-identifiable";
    case Identifiability::conditions_not_checked: return "conditions-not-checked";
  }
  return "unknown";
}

struct IdentifiabilityReport {
  Identifiability verdict = Identifiability::conditions_not_checked;
  std::optional<int> witness;  // 0-based predictor index
  std::string explanation;
};

/// Checks the identifiability condition for beta^0: given an observational
/// environment and interventions that are full rank on their supports, beta^0
/// is identifiable iff every predictor is intervened on somewhere.
inline IdentifiabilityReport check_identifiability(const SemSpec& spec, double eig_tol = 1e-10) {
  const SemSpec s = validate_spec(spec);
  const int p = s.p;
  IdentifiabilityReport rep;
  bool has_obs = false;
  for (const auto& env : s.environments) has_obs = has_obs || is_observational(env);
  if (!has_obs) {
    rep.explanation = "no observational environment (delta = 0); the criterion assumes one";
    return rep;
  }
  for (const auto& env : s.environments) {
    const Matrix mom = intervention_moment(env).topLeftCorner(p, p);
    std::vector<int> support;
    for (int k = 0; k < p; ++k) {
      if (mom(k, k) > 0.0) support.push_back(k);
    }
    // First coordinate whose inclusion makes the leading support block singular.
    for (std::size_t j = 0; j < support.size(); ++j) {
      Matrix block(j + 1, j + 1);
      for (std::size_t a = 0; a <= j; ++a) {
        for (std::size_t b = 0; b <= j; ++b) block(a, b) = mom(support[a], support[b]);
      }
      if (min_eigenvalue(block) <= eig_tol) {
        rep.witness = support[j];
        rep.explanation = "intervention in environment " + env.label + " is not full rank on its support (X" +
                          std::to_string(support[j] + 1) + ")";
        return rep;
      }
    }
  }
  for (int k = 0; k < p; ++k) {
    bool hit = false;
    for (const auto& env : s.environments) hit = hit || intervention_moment(env)(k, k) > 0.0;
    if (!hit) {
      rep.verdict = Identifiability::not_identifiable;
      rep.witness = k;
      rep.explanation = "X" + std::to_string(k + 1) + " is not intervened on in any environment";
      return rep;
    }
  }
  rep.verdict = Identifiability::identifiable;
  rep.explanation = "every predictor is intervened on in some environment";
  return rep;
}

/// max_e ||Z^e - G^e beta0||_inf.
inline double zstar(const GramShift& gram, const Vector& beta0) {
  if (beta0.size() != gram.p) throw ValidationError(ValidationKind::dimension, "beta0 must have length p");
  double out = 0.0;
  for (const auto& pair : gram.per_env) out = std::max(out, norm_inf(pair.Z - pair.G * beta0));
  return out;
}

/// Upper bound on z* holding with probability at least 1 - 4 exp(-t) for
/// centred Gaussian data: sigma_eps * sum_e sigma_max^e (sqrt(a/n_e) + a/n_e),
/// a = 4t + 4 log p.
inline double zstar_bound(double sigma_eps, const std::vector<double>& sigma_max, const std::vector<std::size_t>& n,
                          int p, double t) {
  const double a = 4.0 * t + 4.0 * std::log(static_cast<double>(p));
  double out = 0.0;
  for (std::size_t e = 0; e < n.size(); ++e) {
    const double r = a / static_cast<double>(n[e]);
    out += sigma_max[e] * (std::sqrt(r) + r);
  }
  return sigma_eps * out;
}

/// The same bound with sigma_eps and sigma_max^e read off the spec for the
/// two named environments.
inline double zstar_bound(const SemSpec& spec, std::string_view e1, std::string_view e2, std::size_t n1,
                          std::size_t n2, double t) {
  const int p = spec.p;
  auto sigma_max = [&](std::string_view label) {
    const Matrix s = population_second_moment(spec, label);
    const Vector mu = population_mean(spec, label);
    double v = 0.0;
    for (int k = 0; k < p; ++k) v = std::max(v, s(k, k) - mu(k) * mu(k));
    return std::sqrt(v);
  };
  const double sigma_eps = std::sqrt(spec.noise_cov(p, p));
  return zstar_bound(sigma_eps, {sigma_max(e1), sigma_max(e2)}, {n1, n2}, p, t);
}

struct CcifOptions {
  /// Largest p accepted for q = 1 (2^(p-1) orthants) and largest |S| for
  /// q = inf (2^(|S|-1) sign patterns).
  int max_enumeration = 16;
  unsigned threads = 1;
  LpOptions lp;
};

namespace detail {

inline std::vector<char> support_mask(const std::vector<int>& s, int p) {
  if (s.empty()) throw ValidationError(ValidationKind::bad_value, "S must be non-empty");
  std::vector<char> in(static_cast<std::size_t>(p), 0);
  for (int k : s) {
    if (k < 0 || k >= p) throw ValidationError(ValidationKind::dimension, "index in S out of range");
    if (in[k]) throw ValidationError(ValidationKind::bad_value, "duplicate index in S");
    in[k] = 1;
  }
  return in;
}

/// Appends the rows +-(G u)_j - t <= 0 for u in columns [0, p) and t in column t_col.
inline void add_sup_rows(std::vector<Vector>& rows, std::vector<double>& rhs, const std::vector<Matrix>& gs,
                         Eigen::Index width, Eigen::Index t_col) {
  for (const auto& g : gs) {
    for (Eigen::Index j = 0; j < g.rows(); ++j) {
      for (double sign : {1.0, -1.0}) {
        Vector r = Vector::Zero(width);
        r.head(g.cols()) = sign * g.row(j).transpose();
        r(t_col) = -1.0;
        rows.push_back(std::move(r));
        rhs.push_back(0.0);
      }
    }
  }
}

inline double solve_subproblem(std::vector<Vector> rows, std::vector<double> rhs, const Vector& eq_row, double eq_rhs,
                               Eigen::Index width, Eigen::Index t_col, const LpOptions& opt) {
  LpProblem lp;
  lp.nonneg = false;
  lp.c = Vector::Zero(width);
  lp.c(t_col) = 1.0;
  lp.A_ub.resize(static_cast<Eigen::Index>(rows.size()), width);
  lp.b_ub.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lp.A_ub.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    lp.b_ub(static_cast<Eigen::Index>(i)) = rhs[i];
  }
  lp.A_eq = eq_row.transpose();
  lp.b_eq = Vector::Constant(1, eq_rhs);
  const LpResult res = solve_lp(lp, opt);
  if (res.status == LpStatus::infeasible) return std::numeric_limits<double>::infinity();
  if (res.status != LpStatus::optimal) throw SolverFailure("CCIF subproblem ended " + to_string(res.status));
  return std::max(res.objective, 0.0);
}

}  // namespace detail

/// Causal cone invertibility factor
///   inf { |S|^{1/q} max_e ||G^e u||_inf / ||u||_q : ||u_{S^c}||_1 <= ||u_S||_1 }
/// for q = 1 or q = inf (pass q <= 0 or +inf for the sup norm), computed
/// exactly as a minimum of linear programs over sign patterns.
inline double ccif(const std::vector<Matrix>& gs, const std::vector<int>& s, double q, const CcifOptions& opt = {}) {
  if (gs.empty()) throw ValidationError(ValidationKind::dimension, "no G supplied");
  const auto p = static_cast<int>(gs.front().cols());
  for (const auto& g : gs) {
    if (g.rows() != p || g.cols() != p) throw ValidationError(ValidationKind::dimension, "G must be p x p");
  }
  const bool sup = std::isinf(q) && q > 0;
  if (!sup && q != 1.0) throw ValidationError(ValidationKind::bad_value, "CCIF is only computed for q = 1 and q = inf");
  const std::vector<char> in_s = detail::support_mask(s, p);
  const auto size_s = static_cast<int>(s.size());
  std::vector<int> comp;
  for (int k = 0; k < p; ++k) {
    if (!in_s[k]) comp.push_back(k);
  }

  if (sup) {
    if (size_s > opt.max_enumeration) throw ValidationError(ValidationKind::bad_value, "|S| too large for enumeration");
    // Variables: u (p), a (|S^c|), t. For each sign pattern sigma on S (first
    // entry +1) and each anchor i with u_i = +-1 (sigma_i when i in S).
    const Eigen::Index width = p + static_cast<Eigen::Index>(comp.size()) + 1;
    const Eigen::Index t_col = width - 1;
    struct Task {
      std::uint64_t pattern;
      int anchor;
      double value;
    };
    std::vector<Task> tasks;
    const std::uint64_t patterns = std::uint64_t{1} << (size_s - 1);
    for (std::uint64_t pat = 0; pat < patterns; ++pat) {
      for (int i = 0; i < p; ++i) {
        if (in_s[i]) {
          tasks.push_back({pat, i, 1.0});
        } else {
          tasks.push_back({pat, i, 1.0});
          tasks.push_back({pat, i, -1.0});
        }
      }
    }
    std::vector<double> values(tasks.size());
    parallel_for(tasks.size(), opt.threads, [&](std::size_t idx) {
      const Task& task = tasks[idx];
      std::vector<double> sigma(static_cast<std::size_t>(p), 0.0);
      for (int j = 0; j < size_s; ++j) {
        sigma[s[j]] = (j == 0 || !((task.pattern >> (j - 1)) & 1U)) ? 1.0 : -1.0;
      }
      std::vector<Vector> rows;
      std::vector<double> rhs;
      detail::add_sup_rows(rows, rhs, gs, width, t_col);
      for (int k = 0; k < p; ++k) {
        for (double sign : {1.0, -1.0}) {
          Vector r = Vector::Zero(width);
          r(k) = sign;
          rows.push_back(std::move(r));
          rhs.push_back(1.0);
        }
        if (in_s[k]) {
          Vector r = Vector::Zero(width);
          r(k) = -sigma[k];
          rows.push_back(std::move(r));
          rhs.push_back(0.0);
        }
      }
      Vector cone = Vector::Zero(width);
      for (std::size_t c = 0; c < comp.size(); ++c) {
        const Eigen::Index a_col = p + static_cast<Eigen::Index>(c);
        for (double sign : {1.0, -1.0}) {
          Vector r = Vector::Zero(width);
          r(comp[c]) = sign;
          r(a_col) = -1.0;
          rows.push_back(std::move(r));
          rhs.push_back(0.0);
        }
        cone(a_col) = 1.0;
      }
      for (int k : s) cone(k) = -sigma[k];
      rows.push_back(cone);
      rhs.push_back(0.0);
      Vector eq = Vector::Zero(width);
      eq(task.anchor) = 1.0;
      const double target = in_s[task.anchor] ? sigma[task.anchor] : task.value;
      values[idx] = detail::solve_subproblem(std::move(rows), std::move(rhs), eq, target, width, t_col, opt.lp);
    });
    return *std::min_element(values.begin(), values.end());
  }

  if (p > opt.max_enumeration) throw ValidationError(ValidationKind::bad_value, "p too large for q = 1 enumeration");
  // Variables: u (p), t. One LP per orthant tau (tau_1 = +1) with
  // sum tau_k u_k = 1, tau_k u_k >= 0 and the cone constraint linear.
  const Eigen::Index width = p + 1;
  const Eigen::Index t_col = p;
  const std::uint64_t orthants = std::uint64_t{1} << (p - 1);
  std::vector<double> values(orthants);
  parallel_for(orthants, opt.threads, [&](std::size_t idx) {
    std::vector<double> tau(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) tau[k] = (k == 0 || !((idx >> (k - 1)) & 1U)) ? 1.0 : -1.0;
    std::vector<Vector> rows;
    std::vector<double> rhs;
    detail::add_sup_rows(rows, rhs, gs, width, t_col);
    Vector cone = Vector::Zero(width);
    Vector eq = Vector::Zero(width);
    for (int k = 0; k < p; ++k) {
      Vector r = Vector::Zero(width);
      r(k) = -tau[k];
      rows.push_back(std::move(r));
      rhs.push_back(0.0);
      cone(k) = in_s[k] ? -tau[k] : tau[k];
      eq(k) = tau[k];
    }
    rows.push_back(cone);
    rhs.push_back(0.0);
    values[idx] = detail::solve_subproblem(std::move(rows), std::move(rhs), eq, 1.0, width, t_col, opt.lp);
  });
  return static_cast<double>(size_s) * *std::min_element(values.begin(), values.end());
}

inline double ccif(const Matrix& g, const std::vector<int>& s, double q, const CcifOptions& opt = {}) {
  return ccif(std::vector<Matrix>{g}, s, q, opt);
}

/// Error bound 2 |S|^{1/q} lambda / CCIF_q(S, G); +inf when CCIF vanishes.
inline double lemma1_bound(double lambda, std::size_t size_s, double q, double ccif_value) {
  const double scale = std::isinf(q) ? 1.0 : std::pow(static_cast<double>(size_s), 1.0 / q);
  if (!(ccif_value > 0.0)) return std::numeric_limits<double>::infinity();
  return 2.0 * scale * lambda / ccif_value;
}

struct PerturbationGap {
  double lhs;
  double rhs;
};

/// (|CCIF_q(S, G_hat) - CCIF_q(S, G)|, 2 |S| ||G_hat - G||_max).
inline PerturbationGap ccif_perturbation_gap(const std::vector<int>& s, const Matrix& g_hat, const Matrix& g, double q,
                                             const CcifOptions& opt = {}) {
  const double a = ccif(g_hat, s, q, opt);
  const double b = ccif(g, s, q, opt);
  return {std::fabs(a - b), 2.0 * static_cast<double>(s.size()) * max_norm(g_hat - g)};
}

struct ResidualMoments {
  std::string label;
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  double fourth = 0.0;  // fourth central moment
};

struct ResidualInvarianceReport {
  std::vector<ResidualMoments> envs;
  double max_mean_discrepancy = 0.0;
  double max_variance_discrepancy = 0.0;

  double max_discrepancy() const { return std::max(max_mean_discrepancy, max_variance_discrepancy); }
};

/// Per-environment mean and variance of r = Y - X beta, and the largest
/// standardized difference over environment pairs. Mean differences are
/// divided by sqrt(v_e/n_e + v_f/n_f), variance differences by the
/// asymptotic standard error sqrt((mu4_e - v_e^2)/n_e + (mu4_f - v_f^2)/n_f).
inline ResidualInvarianceReport residual_invariance_test(std::span<const EnvDataset> envs, const Vector& beta) {
  if (envs.size() < 2) throw ValidationError(ValidationKind::dimension, "need at least two environments");
  ResidualInvarianceReport rep;
  for (const auto& env : envs) {
    if (env.n() < 2) throw ValidationError(ValidationKind::dimension, "environment " + env.env_label + " is too small");
    if (env.p() != beta.size()) throw ValidationError(ValidationKind::dimension, "beta must have length p");
    const Vector r = env.Y - env.X * beta;
    const double n = static_cast<double>(env.n());
    ResidualMoments m;
    m.label = env.env_label;
    m.n = env.n();
    m.mean = r.mean();
    const Eigen::ArrayXd c = r.array() - m.mean;
    m.variance = c.square().sum() / (n - 1.0);
    m.fourth = c.square().square().sum() / n;
    rep.envs.push_back(m);
  }
  auto ratio = [](double num, double den) {
    if (num == 0.0) return 0.0;
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  };
  for (std::size_t a = 0; a < rep.envs.size(); ++a) {
    for (std::size_t b = a + 1; b < rep.envs.size(); ++b) {
      const auto& e = rep.envs[a];
      const auto& f = rep.envs[b];
      const double ne = static_cast<double>(e.n);
      const double nf = static_cast<double>(f.n);
      rep.max_mean_discrepancy = std::max(
          rep.max_mean_discrepancy, ratio(std::fabs(e.mean - f.mean), std::sqrt(e.variance / ne + f.variance / nf)));
      const double se2 = std::max(0.0, e.fourth - e.variance * e.variance) / ne +
                         std::max(0.0, f.fourth - f.variance * f.variance) / nf;
      rep.max_variance_discrepancy =
          std::max(rep.max_variance_discrepancy, ratio(std::fabs(e.variance - f.variance), std::sqrt(se2)));
    }
  }
  return rep;
}

}  // namespace cdantzig

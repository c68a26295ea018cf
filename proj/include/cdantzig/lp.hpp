#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace cdantzig {

/// minimize c^T x  subject to  A_ub x <= b_ub,  A_eq x = b_eq,  and x >= 0 when
/// `nonneg` is set (otherwise x is free).
struct LpProblem {
  Vector c;
  Matrix A_ub;
  Vector b_ub;
  bool nonneg = true;
  Matrix A_eq;
  Vector b_eq;

  Eigen::Index dim() const { return c.size(); }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

struct LpOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  /// Recompute the basic solution and the duals from an LU factorization of
  /// the final basis.
  bool refine = true;
  /// When set, every pivot is written here as one text line.
  std::ostream* trace = nullptr;
};

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Vector x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  /// Lagrange multipliers, sign convention y_ub <= 0, so that
  /// c - A_ub^T y_ub - A_eq^T y_eq >= 0 and b^T y equals the objective.
  Vector dual_ub;
  Vector dual_eq;
  std::size_t pivots = 0;
};

namespace detail {

/// Dense Tucker tableau over the nonbasic columns only. Row i reads
///   x_{basic[i]} + sum_j T(i, j) x_{nonbasic[j]} = T(i, rhs)
/// and the objective rows read  -z + sum_j d_j x_{nonbasic[j]} = -zbar.
class Tableau {
 public:
  Tableau(int rows, int cols, int objectives)
      : rows_(rows), cols_(cols), width_(cols + 1), data_(static_cast<std::size_t>(rows + objectives) * width_, 0.0) {}

  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * width_ + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * width_ + j]; }
  double& rhs(int i) { return at(i, cols_); }
  double rhs(int i) const { return at(i, cols_); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int total_rows() const { return static_cast<int>(data_.size() / width_); }

  void pivot(int r, int s) {
    double* pr = &data_[static_cast<std::size_t>(r) * width_];
    const double inv = 1.0 / pr[s];
    for (int j = 0; j < width_; ++j) pr[j] *= inv;
    pr[s] = inv;
    const int total = total_rows();
    for (int i = 0; i < total; ++i) {
      if (i == r) continue;
      double* pi = &data_[static_cast<std::size_t>(i) * width_];
      const double f = pi[s];
      if (f == 0.0) continue;
      for (int j = 0; j < width_; ++j) pi[j] -= f * pr[j];
      pi[s] = -f * inv;
    }
  }

 private:
  int rows_;
  int cols_;
  int width_;
  std::vector<double> data_;
};

enum class SimplexOutcome { optimal, unbounded };

/// Standard form used internally: minimize c^T v, M v <= h, v >= 0.
struct StandardForm {
  Matrix M;
  Vector h;
  Vector c;
};

inline StandardForm to_standard_form(const LpProblem& lp) {
  const Eigen::Index d = lp.dim();
  const Eigen::Index m_ub = lp.A_ub.rows();
  const Eigen::Index m_eq = lp.A_eq.rows();
  const Eigen::Index nv = lp.nonneg ? d : 2 * d;
  StandardForm sf;
  sf.M.resize(m_ub + 2 * m_eq, nv);
  sf.h.resize(m_ub + 2 * m_eq);
  sf.c.resize(nv);
  auto put = [&](Eigen::Index row, const auto& a, double sign) {
    sf.M.row(row).head(d) = sign * a;
    if (!lp.nonneg) sf.M.row(row).tail(d) = -sign * a;
  };
  for (Eigen::Index i = 0; i < m_ub; ++i) {
    put(i, lp.A_ub.row(i), 1.0);
    sf.h(i) = lp.b_ub(i);
  }
  for (Eigen::Index i = 0; i < m_eq; ++i) {
    put(m_ub + 2 * i, lp.A_eq.row(i), 1.0);
    sf.h(m_ub + 2 * i) = lp.b_eq(i);
    put(m_ub + 2 * i + 1, lp.A_eq.row(i), -1.0);
    sf.h(m_ub + 2 * i + 1) = -lp.b_eq(i);
  }
  sf.c.head(d) = lp.c;
  if (!lp.nonneg) sf.c.tail(d) = -lp.c;
  return sf;
}

inline void validate_problem(const LpProblem& lp) {
  const Eigen::Index d = lp.dim();
  if (d == 0) throw ValidationError(ValidationKind::dimension, "LP has no variables");
  if (lp.A_ub.rows() != lp.b_ub.size() || (lp.A_ub.rows() > 0 && lp.A_ub.cols() != d)) {
    throw ValidationError(ValidationKind::dimension, "A_ub/b_ub dimensions inconsistent");
  }
  if (lp.A_eq.rows() != lp.b_eq.size() || (lp.A_eq.rows() > 0 && lp.A_eq.cols() != d)) {
    throw ValidationError(ValidationKind::dimension, "A_eq/b_eq dimensions inconsistent");
  }
  if (!lp.c.allFinite() || !lp.A_ub.allFinite() || !lp.b_ub.allFinite() || !lp.A_eq.allFinite() ||
      !lp.b_eq.allFinite()) {
    throw ValidationError(ValidationKind::bad_value, "LP data must be finite");
  }
}

/// Primal simplex on a tableau that is already primal feasible. Objective row
/// `obj` drives pivoting; columns flagged in `blocked` never enter and rows
/// flagged in `dead` never leave.
class Simplex {
 public:
  Simplex(Tableau& t, std::vector<int>& basic, std::vector<int>& nonbasic, const LpOptions& opt,
          std::size_t budget)
      : t_(t), basic_(basic), nonbasic_(nonbasic), opt_(opt), budget_(budget) {}

  std::vector<char> blocked;
  std::vector<char> dead;
  std::size_t pivots = 0;

  void pivot(int r, int s, int phase) {
    if (opt_.trace) {
      *opt_.trace << "phase " << phase << " pivot " << pivots << ": enter v" << nonbasic_[s] << " leave v"
                  << basic_[r] << " element " << t_.at(r, s) << '\n';
    }
    t_.pivot(r, s);
    std::swap(basic_[r], nonbasic_[s]);
    ++pivots;
    if (pivots > budget_) throw SolverFailure("simplex pivot budget exhausted");
  }

  SimplexOutcome run(int obj, int phase) {
    const int m = t_.rows();
    const int n = t_.cols();
    const std::size_t degenerate_limit = 10 * static_cast<std::size_t>(m + n);
    std::size_t degenerate = 0;
    bool bland = false;
    for (;;) {
      int s = -1;
      double best = -opt_.opt_tol;
      for (int j = 0; j < n; ++j) {
        if (!blocked.empty() && blocked[j]) continue;
        const double dj = t_.at(obj, j);
        if (bland) {
          if (dj < -opt_.opt_tol && (s < 0 || nonbasic_[j] < nonbasic_[s])) s = j;
        } else if (dj < best) {
          best = dj;
          s = j;
        }
      }
      if (s < 0) return SimplexOutcome::optimal;

      double theta = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (!dead.empty() && dead[i]) continue;
        const double a = t_.at(i, s);
        if (a > kPivotTol) theta = std::min(theta, std::max(t_.rhs(i), 0.0) / a);
      }
      if (!std::isfinite(theta)) return SimplexOutcome::unbounded;
      const double slack = 1e-12 * (1.0 + theta);
      int r = -1;
      for (int i = 0; i < m; ++i) {
        if (!dead.empty() && dead[i]) continue;
        const double a = t_.at(i, s);
        if (a <= kPivotTol || std::max(t_.rhs(i), 0.0) / a > theta + slack) continue;
        if (r < 0) {
          r = i;
        } else if (bland ? basic_[i] < basic_[r] : a > t_.at(r, s)) {
          r = i;
        }
      }
      const bool degenerate_step = theta * t_.at(r, s) <= opt_.feas_tol;
      pivot(r, s, phase);
      for (int i = 0; i < m; ++i) {
        if (t_.rhs(i) < 0.0 && t_.rhs(i) > -opt_.feas_tol) t_.rhs(i) = 0.0;
      }
      if (degenerate_step) {
        if (++degenerate >= degenerate_limit) bland = true;
      } else {
        degenerate = 0;
      }
    }
  }

  static constexpr double kPivotTol = 1e-11;

 private:
  Tableau& t_;
  std::vector<int>& basic_;
  std::vector<int>& nonbasic_;
  const LpOptions& opt_;
  std::size_t budget_;
};

}  // namespace detail

/// Dense two-phase primal simplex. Phase one introduces a single artificial
/// variable x0 with coefficient -1 in every row and first pivots it against
/// the most violated row. Pivoting uses the most negative reduced cost and
/// switches to Bland's rule after 10 (m + d) consecutive degenerate pivots.
inline LpResult solve_lp(const LpProblem& problem, const LpOptions& opt = {}) {
  detail::validate_problem(problem);
  const detail::StandardForm sf = detail::to_standard_form(problem);
  const int m = static_cast<int>(sf.M.rows());
  const int nv = static_cast<int>(sf.c.size());
  const std::size_t budget = 50 * static_cast<std::size_t>(m + nv) * static_cast<std::size_t>(m + nv);

  // Variable labels: 0..nv-1 structural, nv..nv+m-1 slacks, nv+m is x0.
  const int x0 = nv + m;
  const int cols = nv + 1;
  detail::Tableau t(m, cols, 2);
  const int obj2 = m;
  const int obj1 = m + 1;
  std::vector<int> basic(m), nonbasic(cols);
  for (int j = 0; j < nv; ++j) nonbasic[j] = j;
  nonbasic[nv] = x0;
  for (int i = 0; i < m; ++i) {
    basic[i] = nv + i;
    for (int j = 0; j < nv; ++j) t.at(i, j) = sf.M(i, j);
    t.at(i, nv) = -1.0;
    t.rhs(i) = sf.h(i);
  }
  for (int j = 0; j < nv; ++j) t.at(obj2, j) = sf.c(j);
  t.at(obj1, nv) = 1.0;

  detail::Simplex simplex(t, basic, nonbasic, opt, budget);
  simplex.blocked.assign(cols, 0);
  simplex.dead.assign(m, 0);
  LpResult result;

  const double b_scale = std::max(1.0, norm_inf(sf.h));
  int worst = -1;
  for (int i = 0; i < m; ++i) {
    if (t.rhs(i) < 0.0 && (worst < 0 || t.rhs(i) < t.rhs(worst))) worst = i;
  }
  if (worst >= 0) {
    simplex.pivot(worst, nv, 1);
    simplex.run(obj1, 1);
    if (-t.rhs(obj1) > opt.feas_tol * b_scale) {
      result.status = LpStatus::infeasible;
      result.pivots = simplex.pivots;
      return result;
    }
    // Drive x0 out of the basis if it is still there at level zero.
    for (int i = 0; i < m; ++i) {
      if (basic[i] != x0) continue;
      int s = -1;
      for (int j = 0; j < cols; ++j) {
        if (nonbasic[j] == x0) continue;
        if (std::fabs(t.at(i, j)) > 1e-9 && (s < 0 || std::fabs(t.at(i, j)) > std::fabs(t.at(i, s)))) s = j;
      }
      if (s >= 0) {
        simplex.pivot(i, s, 1);
      } else {
        simplex.dead[i] = 1;
      }
    }
  }
  for (int j = 0; j < cols; ++j) {
    if (nonbasic[j] == x0) simplex.blocked[j] = 1;
  }

  if (simplex.run(obj2, 2) == detail::SimplexOutcome::unbounded) {
    result.status = LpStatus::unbounded;
    result.pivots = simplex.pivots;
    return result;
  }

  // Basic solution and duals.
  Vector v = Vector::Zero(nv + m + 1);
  for (int i = 0; i < m; ++i) v(basic[i]) = t.rhs(i);
  Vector y = Vector::Zero(m);
  for (int j = 0; j < cols; ++j) {
    if (nonbasic[j] >= nv && nonbasic[j] < nv + m) y(nonbasic[j] - nv) = -t.at(obj2, j);
  }
  if (opt.refine && m > 0) {
    Matrix basis(m, m);
    Vector cb(m);
    for (int i = 0; i < m; ++i) {
      const int label = basic[i];
      if (label < nv) {
        basis.col(i) = sf.M.col(label);
        cb(i) = sf.c(label);
      } else if (label < nv + m) {
        basis.col(i) = Vector::Unit(m, label - nv);
        cb(i) = 0.0;
      } else {
        basis.col(i) = Vector::Constant(m, -1.0);
        cb(i) = 0.0;
      }
    }
    Eigen::PartialPivLU<Matrix> lu(basis);
    const Vector xb = lu.solve(sf.h);
    const Vector yr = lu.transpose().solve(cb);
    if (xb.allFinite() && yr.allFinite()) {
      for (int i = 0; i < m; ++i) v(basic[i]) = std::max(xb(i), 0.0);
      y = yr;
    }
  }

  const Eigen::Index d = problem.dim();
  result.status = LpStatus::optimal;
  result.pivots = simplex.pivots;
  result.x = problem.nonneg ? Vector(v.head(d)) : Vector(v.head(d) - v.segment(d, d));
  result.objective = problem.c.dot(result.x);
  const Eigen::Index m_ub = problem.A_ub.rows();
  result.dual_ub = y.head(m_ub);
  result.dual_eq.resize(problem.A_eq.rows());
  for (Eigen::Index i = 0; i < problem.A_eq.rows(); ++i) {
    result.dual_eq(i) = y(m_ub + 2 * i) - y(m_ub + 2 * i + 1);
  }
  return result;
}

struct CertificateReport {
  bool ok = false;
  double primal_violation = 0.0;
  double dual_violation = 0.0;
  double gap = 0.0;
};

/// Checks primal feasibility, dual feasibility (y_ub <= 0, reduced costs of
/// the right sign) and a matching dual objective within 1e-7 (1 + |obj|).
inline CertificateReport verify_dual_certificate(const LpProblem& lp, const LpResult& res, double tol = 1e-7) {
  CertificateReport rep;
  if (res.status != LpStatus::optimal) return rep;
  const double scale = 1.0 + std::max({norm_inf(lp.c), max_norm(lp.A_ub), max_norm(lp.A_eq)});
  if (lp.A_ub.rows() > 0) {
    rep.primal_violation = std::max(0.0, (lp.A_ub * res.x - lp.b_ub).maxCoeff());
  }
  if (lp.A_eq.rows() > 0) {
    rep.primal_violation = std::max(rep.primal_violation, norm_inf(lp.A_eq * res.x - lp.b_eq));
  }
  if (lp.nonneg) rep.primal_violation = std::max(rep.primal_violation, std::max(0.0, -res.x.minCoeff()));

  Vector reduced = lp.c;
  if (lp.A_ub.rows() > 0) reduced -= lp.A_ub.transpose() * res.dual_ub;
  if (lp.A_eq.rows() > 0) reduced -= lp.A_eq.transpose() * res.dual_eq;
  rep.dual_violation = lp.nonneg ? std::max(0.0, -reduced.minCoeff()) : norm_inf(reduced);
  if (res.dual_ub.size() > 0) rep.dual_violation = std::max(rep.dual_violation, std::max(0.0, res.dual_ub.maxCoeff()));

  double dual_obj = 0.0;
  if (lp.A_ub.rows() > 0) dual_obj += lp.b_ub.dot(res.dual_ub);
  if (lp.A_eq.rows() > 0) dual_obj += lp.b_eq.dot(res.dual_eq);
  rep.gap = std::fabs(dual_obj - res.objective);
  const double y_scale = 1.0 + std::max(norm_inf(res.dual_ub), norm_inf(res.dual_eq));
  rep.ok = rep.primal_violation <= tol * (1.0 + norm_inf(lp.b_ub)) &&
           rep.dual_violation <= tol * scale * y_scale && rep.gap <= 1e-7 * (1.0 + std::fabs(res.objective));
  return rep;
}

struct MinmaxSolution {
  Vector beta;
  double t = 0.0;
  LpStatus status = LpStatus::optimal;
};

/// min_beta max_e ||Z^e - G^e beta||_inf as the LP over (beta+, beta-, t):
/// minimize t subject to +-(Z^e - G^e beta)_j <= t.
inline MinmaxSolution solve_minmax_linf(const std::vector<Vector>& zs, const std::vector<Matrix>& gs,
                                        const LpOptions& opt = {}) {
  if (zs.empty() || zs.size() != gs.size()) {
    throw ValidationError(ValidationKind::dimension, "need matching non-empty lists of Z and G");
  }
  const Eigen::Index p = zs.front().size();
  for (std::size_t e = 0; e < zs.size(); ++e) {
    if (zs[e].size() != p || gs[e].rows() != p || gs[e].cols() != p) {
      throw ValidationError(ValidationKind::dimension, "Z/G dimensions disagree");
    }
  }
  const auto n_env = static_cast<Eigen::Index>(zs.size());
  LpProblem lp;
  lp.c = Vector::Zero(2 * p + 1);
  lp.c(2 * p) = 1.0;
  lp.A_ub.resize(2 * p * n_env, 2 * p + 1);
  lp.b_ub.resize(2 * p * n_env);
  for (Eigen::Index e = 0; e < n_env; ++e) {
    const Matrix& g = gs[static_cast<std::size_t>(e)];
    const Vector& z = zs[static_cast<std::size_t>(e)];
    const Eigen::Index top = 2 * p * e;
    // Z - G beta <= t  <=>  -G beta+ + G beta- - t <= -Z
    lp.A_ub.block(top, 0, p, p) = -g;
    lp.A_ub.block(top, p, p, p) = g;
    lp.A_ub.block(top, 2 * p, p, 1).setConstant(-1.0);
    lp.b_ub.segment(top, p) = -z;
    // G beta - Z <= t
    lp.A_ub.block(top + p, 0, p, p) = g;
    lp.A_ub.block(top + p, p, p, p) = -g;
    lp.A_ub.block(top + p, 2 * p, p, 1).setConstant(-1.0);
    lp.b_ub.segment(top + p, p) = z;
  }
  const LpResult res = solve_lp(lp, opt);
  if (res.status != LpStatus::optimal) {
    throw SolverFailure("min-max LP ended " + to_string(res.status));
  }
  MinmaxSolution out;
  out.beta = res.x.head(p) - res.x.segment(p, p);
  out.t = res.x(2 * p);
  return out;
}

}  // namespace cdantzig

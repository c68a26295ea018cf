#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "exact_sum.hpp"
#include "linalg.hpp"
#include "sem.hpp"

namespace cdantzig {

/// One (Z^e, G^e) pair.
struct GramPair {
  Vector Z;
  Matrix G;
};

/// Gram-shift statistics. With two environments a single pair
/// (Z, G) = (Z^1, G^1) is stored; the second environment's pair is its
/// negation. With more environments there is one pair per environment.
struct GramShift {
  int p = 0;
  std::vector<std::string> labels;
  std::vector<std::size_t> sample_sizes;
  std::vector<GramPair> per_env;
  /// p x per_env.size() matrix of applied row factors 1/sqrt(c_{k,e}).
  std::optional<Matrix> scaling;
  /// Global mean (length p+1) subtracted before the Grams were formed; empty
  /// when the data were used as given.
  Vector center;

  std::size_t n_envs() const { return labels.size(); }
  const Vector& Z() const { return per_env.front().Z; }
  const Matrix& G() const { return per_env.front().G; }
};

/// Per-environment cross products X^T X and X^T Y, each entry a correctly
/// rounded sum over rows.
struct CrossProducts {
  Matrix xx;
  Vector xy;
  std::size_t n = 0;

  Matrix gram() const { return xx / static_cast<double>(n); }
  Vector inner() const { return xy / static_cast<double>(n); }
};

namespace detail {

inline void require_same_p(std::span<const EnvDataset> envs) {
  for (const auto& e : envs) {
    if (e.p() != envs.front().p()) throw ValidationError(ValidationKind::dimension, "environments disagree on p");
    if (static_cast<Eigen::Index>(e.n()) != e.X.rows()) {
      throw ValidationError(ValidationKind::dimension, "X and Y row counts differ in " + e.env_label);
    }
  }
}

}  // namespace detail

/// Cross products over the selected rows (all rows when `rows` is empty).
inline CrossProducts cross_products(const EnvDataset& env, std::span<const std::size_t> rows = {}) {
  const int p = env.p();
  const bool all = rows.empty();
  const std::size_t n = all ? env.n() : rows.size();
  std::vector<ExactSum> xx(static_cast<std::size_t>(p * (p + 1) / 2));
  std::vector<ExactSum> xy(static_cast<std::size_t>(p));
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(all ? r : rows[r]);
    std::size_t slot = 0;
    for (int j = 0; j < p; ++j) {
      const double xj = env.X(i, j);
      xy[j].add(xj * env.Y(i));
      for (int k = j; k < p; ++k) xx[slot++].add(xj * env.X(i, k));
    }
  }
  CrossProducts out;
  out.n = n;
  out.xx.resize(p, p);
  out.xy.resize(p);
  std::size_t slot = 0;
  for (int j = 0; j < p; ++j) {
    out.xy(j) = xy[j].value();
    for (int k = j; k < p; ++k) {
      out.xx(j, k) = out.xx(k, j) = xx[slot++].value();
    }
  }
  return out;
}

/// Sum of several CrossProducts (entrywise correctly rounded).
inline CrossProducts combine(std::span<const CrossProducts> parts) {
  CrossProducts out;
  if (parts.empty()) return out;
  const auto p = parts.front().xy.size();
  out.xx = Matrix::Zero(p, p);
  out.xy = Vector::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    ExactSum sy;
    for (const auto& part : parts) sy.add(part.xy(j));
    out.xy(j) = sy.value();
    for (Eigen::Index k = j; k < p; ++k) {
      ExactSum s;
      for (const auto& part : parts) s.add(part.xx(j, k));
      out.xx(j, k) = out.xx(k, j) = s.value();
    }
  }
  for (const auto& part : parts) out.n += part.n;
  return out;
}

struct CenteredData {
  std::vector<EnvDataset> envs;
  Vector mean;  // length p+1, last entry is the response
};

/// Subtracts the unweighted average of per-environment means of (X, Y) from
/// every row of every environment. Empty environments take no part in the
/// average.
inline CenteredData center_datasets(std::span<const EnvDataset> envs) {
  if (envs.empty()) throw ValidationError(ValidationKind::dimension, "no environments");
  detail::require_same_p(envs);
  const int p = envs.front().p();
  std::vector<Vector> means;
  for (const auto& e : envs) {
    if (e.n() == 0) continue;
    Vector mu(p + 1);
    for (int j = 0; j <= p; ++j) {
      ExactSum s;
      for (Eigen::Index i = 0; i < e.X.rows(); ++i) s.add(j < p ? e.X(i, j) : e.Y(i));
      mu(j) = s.value() / static_cast<double>(e.n());
    }
    means.push_back(std::move(mu));
  }
  if (means.empty()) throw ValidationError(ValidationKind::dimension, "all environments are empty");
  CenteredData out;
  out.mean.resize(p + 1);
  for (int j = 0; j <= p; ++j) {
    ExactSum s;
    for (const auto& mu : means) s.add(mu(j));
    out.mean(j) = s.value() / static_cast<double>(means.size());
  }
  for (const auto& e : envs) {
    EnvDataset c = e;
    c.X.rowwise() -= out.mean.head(p).transpose();
    c.Y.array() -= out.mean(p);
    out.envs.push_back(std::move(c));
  }
  return out;
}

/// Builds a GramShift from per-environment cross products: one pair
/// (Z^1 - Z^2, G^1 - G^2) for two environments, otherwise the
/// leave-one-out form Z^e - mean_{e' != e} Z^{e'}.
inline GramShift gram_from_cross_products(std::span<const CrossProducts> cps, std::vector<std::string> labels) {
  if (cps.size() < 2) throw ValidationError(ValidationKind::dimension, "need at least two environments");
  for (const auto& cp : cps) {
    if (cp.n == 0) throw ValidationError(ValidationKind::dimension, "empty environment");
  }
  GramShift out;
  out.p = static_cast<int>(cps.front().xy.size());
  out.labels = std::move(labels);
  for (const auto& cp : cps) out.sample_sizes.push_back(cp.n);
  std::vector<Matrix> grams;
  std::vector<Vector> inners;
  for (const auto& cp : cps) {
    grams.push_back(cp.gram());
    inners.push_back(cp.inner());
  }
  if (cps.size() == 2) {
    out.per_env.push_back({inners[0] - inners[1], grams[0] - grams[1]});
    return out;
  }
  const double others = static_cast<double>(cps.size() - 1);
  const auto p = out.p;
  for (std::size_t e = 0; e < cps.size(); ++e) {
    GramPair pair{Vector(p), Matrix(p, p)};
    for (int j = 0; j < p; ++j) {
      ExactSum sz;
      for (std::size_t f = 0; f < cps.size(); ++f) {
        if (f != e) sz.add(inners[f](j));
      }
      pair.Z(j) = inners[e](j) - sz.value() / others;
      for (int k = j; k < p; ++k) {
        ExactSum sg;
        for (std::size_t f = 0; f < cps.size(); ++f) {
          if (f != e) sg.add(grams[f](j, k));
        }
        pair.G(j, k) = pair.G(k, j) = grams[e](j, k) - sg.value() / others;
      }
    }
    out.per_env.push_back(std::move(pair));
  }
  return out;
}

/// Z = X1^T Y1 / n1 - X2^T Y2 / n2 and G = X1^T X1 / n1 - X2^T X2 / n2.
inline GramShift compute_gram_shift(const EnvDataset& env1, const EnvDataset& env2) {
  const EnvDataset pair[] = {env1, env2};
  detail::require_same_p(pair);
  if (env1.n() == 0 || env2.n() == 0) throw ValidationError(ValidationKind::dimension, "empty environment");
  const CrossProducts cps[] = {cross_products(env1), cross_products(env2)};
  return gram_from_cross_products(cps, {env1.env_label, env2.env_label});
}

/// Leave-one-out Gram shifts for two or more environments. With exactly two
/// environments both pairs are returned explicitly (the second is the
/// negation of the first); use compute_gram for the compact form.
inline GramShift compute_multi_gram(std::span<const EnvDataset> envs) {
  if (envs.size() < 2) throw ValidationError(ValidationKind::dimension, "need at least two environments");
  detail::require_same_p(envs);
  std::vector<CrossProducts> cps;
  std::vector<std::string> labels;
  for (const auto& e : envs) {
    if (e.n() == 0) throw ValidationError(ValidationKind::dimension, "empty environment " + e.env_label);
    cps.push_back(cross_products(e));
    labels.push_back(e.env_label);
  }
  GramShift out = gram_from_cross_products(cps, std::move(labels));
  if (envs.size() == 2) out.per_env.push_back({-out.per_env[0].Z, -out.per_env[0].G});
  return out;
}

/// Compact Gram shift: one pair for two environments, leave-one-out pairs
/// otherwise.
inline GramShift compute_gram(std::span<const EnvDataset> envs) {
  if (envs.size() == 2) return compute_gram_shift(envs[0], envs[1]);
  return compute_multi_gram(envs);
}

/// Per-environment empirical second moments mean(X_k^2), k = 1..p.
inline std::vector<Vector> second_moments(std::span<const EnvDataset> envs) {
  std::vector<Vector> out;
  for (const auto& e : envs) {
    Vector m(e.p());
    for (int k = 0; k < e.p(); ++k) {
      ExactSum s;
      for (Eigen::Index i = 0; i < e.X.rows(); ++i) s.add(e.X(i, k) * e.X(i, k));
      m(k) = e.n() == 0 ? 0.0 : s.value() / static_cast<double>(e.n());
    }
    out.push_back(std::move(m));
  }
  return out;
}

/// Scales row k of every (Z^e, G^e) by 1/sqrt(c_{k,e}) with
/// c_{k,e} = m_{k,e}/n_e + (|E|-1)^{-2} sum_{e' != e} m_{k,e'}/n_{e'},
/// m the per-environment second moments. Rejects an already scaled gram.
inline GramShift apply_scaling(GramShift gram, const std::vector<Vector>& moments) {
  if (gram.scaling) throw ValidationError(ValidationKind::bad_value, "gram is already scaled");
  const std::size_t n_env = gram.n_envs();
  if (moments.size() != n_env) throw ValidationError(ValidationKind::dimension, "one moment vector per environment");
  for (const auto& m : moments) {
    if (m.size() != gram.p) throw ValidationError(ValidationKind::dimension, "moment vector length must be p");
    if (!(m.minCoeff() > 0.0)) {
      throw ValidationError(ValidationKind::bad_value, "second moment must be positive (constant column?)");
    }
  }
  const double w = 1.0 / (static_cast<double>(n_env - 1) * static_cast<double>(n_env - 1));
  Matrix factors(gram.p, static_cast<Eigen::Index>(gram.per_env.size()));
  for (std::size_t e = 0; e < gram.per_env.size(); ++e) {
    for (int k = 0; k < gram.p; ++k) {
      double rest = 0.0;
      for (std::size_t f = 0; f < n_env; ++f) {
        if (f != e) rest += moments[f](k) / static_cast<double>(gram.sample_sizes[f]);
      }
      const double c = moments[e](k) / static_cast<double>(gram.sample_sizes[e]) + w * rest;
      factors(k, static_cast<Eigen::Index>(e)) = 1.0 / std::sqrt(c);
    }
    auto& pair = gram.per_env[e];
    const Vector f = factors.col(static_cast<Eigen::Index>(e));
    pair.Z = pair.Z.cwiseProduct(f);
    pair.G = f.asDiagonal() * pair.G;
  }
  gram.scaling = std::move(factors);
  return gram;
}

/// Undoes apply_scaling.
inline GramShift unscaled(GramShift gram) {
  if (!gram.scaling) return gram;
  for (std::size_t e = 0; e < gram.per_env.size(); ++e) {
    const Vector f = gram.scaling->col(static_cast<Eigen::Index>(e)).cwiseInverse();
    gram.per_env[e].Z = gram.per_env[e].Z.cwiseProduct(f);
    gram.per_env[e].G = f.asDiagonal() * gram.per_env[e].G;
  }
  gram.scaling.reset();
  return gram;
}

struct GramOptions {
  bool center = true;
  bool scale = false;
};

/// Centre (optional), form the compact gram, scale (optional).
inline GramShift prepare_gram(std::span<const EnvDataset> envs, const GramOptions& opt,
                              std::vector<EnvDataset>* centered_out = nullptr) {
  std::vector<EnvDataset> data;
  Vector center;
  if (opt.center) {
    auto c = center_datasets(envs);
    data = std::move(c.envs);
    center = std::move(c.mean);
  } else {
    data.assign(envs.begin(), envs.end());
  }
  GramShift gram = compute_gram(data);
  gram.center = center;
  if (opt.scale) gram = apply_scaling(std::move(gram), second_moments(data));
  if (centered_out) *centered_out = std::move(data);
  return gram;
}

}  // namespace cdantzig

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace cdantzig {

/// Additive intervention delta^e for one environment. Coordinate p+1 (the
/// response) must carry neither a mean shift nor variance.
struct InterventionSpec {
  std::string label;
  Vector mean_shift;
  Matrix cov;
  /// Measurement-noise variance on the response in this environment; falls
  /// back to the last entry of SemSpec::meas_noise_var when unset.
  std::optional<double> meas_noise_y;
};

/// Linear SEM X <- A X + eta^0 + delta^e over p predictors and a response
/// stored as coordinate p+1 (index p).
struct SemSpec {
  int p = 0;
  Matrix A;
  Matrix noise_cov;
  std::vector<InterventionSpec> environments;
  std::optional<Vector> meas_noise_var;

  const InterventionSpec& environment(std::string_view label) const {
    for (const auto& env : environments) {
      if (env.label == label) return env;
    }
    throw ValidationError(ValidationKind::unknown_environment,
                          "no environment labelled '" + std::string(label) + "'");
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& env : environments) out.push_back(env.label);
    return out;
  }
};

/// Realised samples of one environment.
struct EnvDataset {
  std::string env_label;
  Matrix X;  // n x p
  Vector Y;  // n

  std::size_t n() const { return static_cast<std::size_t>(Y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
};

struct ValidationOptions {
  double max_condition = 1e12;
  double psd_tol = 1e-10;
  double symmetry_tol = 1e-12;
};

namespace detail {

inline void check_square(const Matrix& m, int dim, const std::string& name) {
  if (m.rows() != dim || m.cols() != dim) {
    throw ValidationError(ValidationKind::dimension,
                          name + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  if (!m.allFinite()) throw ValidationError(ValidationKind::bad_value, name + " has non-finite entries");
}

inline void check_covariance(const Matrix& m, const std::string& name, const ValidationOptions& opt) {
  const double scale = std::max(1.0, max_norm(m));
  if (!is_symmetric(m, opt.symmetry_tol * scale)) {
    throw ValidationError(ValidationKind::not_symmetric, name + " is not symmetric");
  }
  const double lo = min_eigenvalue(0.5 * (m + m.transpose()));
  if (lo < -opt.psd_tol * scale) {
    throw ValidationError(ValidationKind::not_psd,
                          name + " is not positive semi-definite (min eigenvalue " + std::to_string(lo) + ")");
  }
}

}  // namespace detail

/// Returns the spec unchanged iff every SemSpec invariant holds; otherwise
/// throws a ValidationError naming the violated invariant.
inline SemSpec validate_spec(SemSpec spec, const ValidationOptions& opt = {}) {
  if (spec.p < 1) throw ValidationError(ValidationKind::dimension, "p must be at least 1");
  const int d = spec.p + 1;
  detail::check_square(spec.A, d, "A");
  detail::check_square(spec.noise_cov, d, "noise_cov");
  for (int k = 0; k < d; ++k) {
    if (spec.A(k, k) != 0.0) {
      throw ValidationError(ValidationKind::diagonal_nonzero,
                            "A(" + std::to_string(k + 1) + "," + std::to_string(k + 1) + ") must be zero");
    }
  }
  const double cond = condition_number(Matrix::Identity(d, d) - spec.A);
  if (!(cond <= opt.max_condition)) {
    throw ValidationError(ValidationKind::singular_structure,
                          "Id - A is singular or ill-conditioned (condition " + std::to_string(cond) + ")");
  }
  detail::check_covariance(spec.noise_cov, "noise_cov", opt);

  std::vector<std::string_view> seen;
  for (const auto& env : spec.environments) {
    for (auto s : seen) {
      if (s == env.label) throw ValidationError(ValidationKind::bad_value, "duplicate environment label " + env.label);
    }
    seen.push_back(env.label);
    if (env.mean_shift.size() != d) {
      throw ValidationError(ValidationKind::dimension, "mean_shift of " + env.label + " must have length p+1");
    }
    if (!env.mean_shift.allFinite()) throw ValidationError(ValidationKind::bad_value, "mean_shift not finite");
    detail::check_square(env.cov, d, "cov of " + env.label);
    if (env.mean_shift(spec.p) != 0.0 || env.cov.row(spec.p).cwiseAbs().maxCoeff() != 0.0 ||
        env.cov.col(spec.p).cwiseAbs().maxCoeff() != 0.0) {
      throw ValidationError(ValidationKind::response_intervention,
                            "environment " + env.label + " intervenes on the response");
    }
    detail::check_covariance(env.cov, "cov of " + env.label, opt);
    if (env.meas_noise_y && !(*env.meas_noise_y >= 0.0)) {
      throw ValidationError(ValidationKind::bad_value, "meas_noise_y must be non-negative");
    }
  }
  if (spec.meas_noise_var) {
    if (spec.meas_noise_var->size() != d) {
      throw ValidationError(ValidationKind::dimension, "meas_noise_var must have length p+1");
    }
    if (!spec.meas_noise_var->allFinite() || spec.meas_noise_var->minCoeff() < 0.0) {
      throw ValidationError(ValidationKind::bad_value, "meas_noise_var must be finite and non-negative");
    }
  }
  return spec;
}

/// Causal coefficients of the response: row p+1 of A, columns 1..p.
inline Vector true_beta(const SemSpec& spec) { return spec.A.row(spec.p).head(spec.p).transpose(); }

/// (Id - A)^{-1} via LU with partial pivoting.
inline Matrix structural_inverse(const SemSpec& spec) {
  const int d = spec.p + 1;
  return (Matrix::Identity(d, d) - spec.A).partialPivLu().inverse();
}

/// Measurement-noise variances (length p+1) effective in one environment;
/// zero vector when the spec has none.
inline Vector measurement_variances(const SemSpec& spec, const InterventionSpec& env) {
  Vector v = spec.meas_noise_var.value_or(Vector::Zero(spec.p + 1));
  if (env.meas_noise_y) v(spec.p) = *env.meas_noise_y;
  return v;
}

/// E[x x^T] of the observed (X, Y) in one environment, (p+1) x (p+1).
inline Matrix population_second_moment(const SemSpec& spec, std::string_view label) {
  const auto& env = spec.environment(label);
  const Matrix m = structural_inverse(spec);
  const Matrix noise = spec.noise_cov + env.cov + env.mean_shift * env.mean_shift.transpose();
  Matrix out = m * noise * m.transpose();
  out.diagonal() += measurement_variances(spec, env);
  return out;
}

inline Vector population_mean(const SemSpec& spec, std::string_view label) {
  return structural_inverse(spec) * spec.environment(label).mean_shift;
}

/// E[X_k (Y - X beta)] for k = 1..p in one environment.
inline Vector population_inner_product(const SemSpec& spec, std::string_view label, const Vector& beta) {
  const Matrix s = population_second_moment(spec, label);
  const int p = spec.p;
  return s.block(0, p, p, 1) - s.topLeftCorner(p, p) * beta;
}

/// Precomputed sampling factors for one spec; cheap to reuse across replicates.
class SemSampler {
 public:
  explicit SemSampler(const SemSpec& spec) : spec_(validate_spec(spec)) {
    const Matrix m = structural_inverse(spec_);
    base_factor_ = m * psd_sqrt(spec_.noise_cov);
    for (const auto& env : spec_.environments) {
      EnvFactors f;
      f.label = env.label;
      f.shift = m * env.mean_shift;
      f.factor = m * psd_sqrt(env.cov);
      f.meas_sd = measurement_variances(spec_, env).cwiseSqrt();
      f.has_meas = spec_.meas_noise_var.has_value() || env.meas_noise_y.has_value();
      envs_.push_back(std::move(f));
    }
  }

  const SemSpec& spec() const { return spec_; }

  /// Row i consumes counters [3(p+1) i, 3(p+1)(i+1)): base noise, intervention
  /// noise, then measurement noise, each p+1 standard normals.
  EnvDataset simulate(std::string_view label, std::size_t n, std::uint64_t seed,
                      std::uint64_t replicate = 0) const {
    const EnvFactors& f = find(label);
    const int d = spec_.p + 1;
    const CounterRng rng(derive_stream_key(seed, label, replicate));
    const auto stride = static_cast<std::uint64_t>(3 * d);
    const auto rows = static_cast<Eigen::Index>(n);
    Matrix z0(rows, d), z1(rows, d), z2;
    if (f.has_meas) z2.resize(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const std::uint64_t base = stride * static_cast<std::uint64_t>(i);
      for (int j = 0; j < d; ++j) {
        z0(i, j) = rng.normal(base + j);
        z1(i, j) = rng.normal(base + d + j);
        if (f.has_meas) z2(i, j) = rng.normal(base + 2 * d + j);
      }
    }
    Matrix full = z0 * base_factor_.transpose() + z1 * f.factor.transpose();
    full.rowwise() += f.shift.transpose();
    if (f.has_meas) full += z2 * f.meas_sd.asDiagonal();

    EnvDataset out;
    out.env_label = std::string(label);
    out.X = full.leftCols(spec_.p);
    out.Y = full.col(spec_.p);
    return out;
  }

 private:
  struct EnvFactors {
    std::string label;
    Vector shift;
    Matrix factor;
    Vector meas_sd;
    bool has_meas = false;
  };

  const EnvFactors& find(std::string_view label) const {
    for (const auto& f : envs_) {
      if (f.label == label) return f;
    }
    throw ValidationError(ValidationKind::unknown_environment,
                          "no environment labelled '" + std::string(label) + "'");
  }

  SemSpec spec_;
  Matrix base_factor_;
  std::vector<EnvFactors> envs_;
};

/// n i.i.d. draws of (X, Y) in one environment; deterministic in
/// (seed, label, replicate, n).
inline EnvDataset simulate(const SemSpec& spec, std::string_view label, std::size_t n, std::uint64_t seed,
                           std::uint64_t replicate = 0) {
  return SemSampler(spec).simulate(label, n, seed, replicate);
}

/// Draws every environment of the spec, in spec order.
inline std::vector<EnvDataset> simulate_all(const SemSampler& sampler, std::size_t n_per_env, std::uint64_t seed,
                                            std::uint64_t replicate = 0) {
  std::vector<EnvDataset> out;
  for (const auto& env : sampler.spec().environments) {
    out.push_back(sampler.simulate(env.label, n_per_env, seed, replicate));
  }
  return out;
}

}  // namespace cdantzig

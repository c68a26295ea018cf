#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rng.hpp"
#include "sem.hpp"

namespace cdantzig {

/// Parameters for the parametric built-in models. Unused fields are ignored.
struct BuiltinParams {
  int p = 20;                              // sem_C
  double sigma = 2.5;                      // sem_C intervention standard deviation
  std::uint64_t loading_seed = 20240801;   // sem_A / sem_B factor loadings
  double kappa = 8.0;                      // sem_A / sem_B intervention strength
  int hidden_dim = 5;                      // sem_A / sem_B factor dimension
  double example_noise_var = 4.0;          // sem_example: variance of the scaled noise in environment "2"
};

namespace detail {

inline InterventionSpec observational(const std::string& label, int d) {
  return {label, Vector::Zero(d), Matrix::Zero(d, d), std::nullopt};
}

/// noise_cov = L L^T + Id with L (d x hidden) i.i.d. N(0,1) from the loading
/// seed; the environment "2" adds ((1 + kappa)^2 - 1) to the predictor
/// variances only, keeping the response free of interventions.
inline SemSpec factor_model_spec(Matrix a, const BuiltinParams& params) {
  const int d = static_cast<int>(a.rows());
  RngStream stream(derive_stream_key(params.loading_seed, "factor_loadings", 0));
  Matrix loadings(d, params.hidden_dim);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < params.hidden_dim; ++j) loadings(i, j) = stream.next_normal();
  }
  SemSpec spec;
  spec.p = d - 1;
  spec.A = std::move(a);
  spec.noise_cov = loadings * loadings.transpose() + Matrix::Identity(d, d);
  const double extra = (1.0 + params.kappa) * (1.0 + params.kappa) - 1.0;
  InterventionSpec strong = observational("2", d);
  for (int k = 0; k < spec.p; ++k) strong.cov(k, k) = extra;
  spec.environments = {observational("1", d), strong};
  return spec;
}

}  // namespace detail

/// Four-variable example: X2 -> Y -> X1 -> X3, X2 -> X1, hidden confounder
/// shared by X2, X3 and Y. The predictor noise terms eta_1..eta_3 have
/// variance 1 in environment "1" and `example_noise_var` in environment "2".
inline SemSpec sem_example(const BuiltinParams& params = {}) {
  if (!(params.example_noise_var >= 1.0)) {
    throw ValidationError(ValidationKind::bad_value, "example_noise_var must be at least 1");
  }
  // order: X1, X2, X3, Y
  SemSpec spec;
  spec.p = 3;
  spec.A = Matrix::Zero(4, 4);
  spec.A(0, 3) = 1.0;  // X1 <- Y
  spec.A(0, 1) = 1.0;  // X1 <- X2
  spec.A(2, 0) = 1.0;  // X3 <- X1
  spec.A(3, 1) = 1.0;  // Y  <- X2
  spec.noise_cov = Matrix::Zero(4, 4);
  spec.noise_cov(0, 0) = 1.0;
  for (int i : {1, 2, 3}) {
    for (int j : {1, 2, 3}) spec.noise_cov(i, j) = i == j ? 2.0 : 1.0;
  }
  InterventionSpec strong = detail::observational("2", 4);
  for (int k = 0; k < 3; ++k) strong.cov(k, k) = params.example_noise_var - 1.0;
  spec.environments = {detail::observational("1", 4), strong};
  return spec;
}

/// Y <- X2, X1 <- Y - X2, factor-model noise.
inline SemSpec sem_A(const BuiltinParams& params = {}) {
  // order: X1, X2, Y
  Matrix a = Matrix::Zero(3, 3);
  a(2, 1) = 1.0;
  a(0, 2) = 1.0;
  a(0, 1) = -1.0;
  return detail::factor_model_spec(std::move(a), params);
}

/// X2 <- X3, Y <- X2 - X3, X1 <- Y - X2, X4 <- X1 - Y, factor-model noise.
inline SemSpec sem_B(const BuiltinParams& params = {}) {
  // order: X1, X2, X3, X4, Y
  Matrix a = Matrix::Zero(5, 5);
  a(1, 2) = 1.0;
  a(4, 1) = 1.0;
  a(4, 2) = -1.0;
  a(0, 1) = -1.0;
  a(0, 4) = 1.0;
  a(3, 0) = 1.0;
  a(3, 4) = -1.0;
  return detail::factor_model_spec(std::move(a), params);
}

/// Chain X1 -> X2 -> Y -> X3 -> ... -> Xp with unit noise; environment "1"
/// adds N(0, sigma^2) to every predictor, environment "0" is observational.
inline SemSpec sem_C(int p, double sigma) {
  if (p < 2) throw ValidationError(ValidationKind::bad_value, "sem_C needs p >= 2");
  const int d = p + 1;
  SemSpec spec;
  spec.p = p;
  spec.A = Matrix::Zero(d, d);
  spec.A(1, 0) = 1.0;  // X2 <- X1
  spec.A(p, 1) = 1.0;  // Y  <- X2
  if (p >= 3) spec.A(2, p) = 1.0;  // X3 <- Y
  for (int k = 3; k < p; ++k) spec.A(k, k - 1) = 1.0;
  spec.noise_cov = Matrix::Identity(d, d);
  InterventionSpec shifted = detail::observational("1", d);
  for (int k = 0; k < p; ++k) shifted.cov(k, k) = sigma * sigma;
  spec.environments = {detail::observational("0", d), shifted};
  return spec;
}

namespace detail {

/// X = H + shift(e) + eps1, Y = 2 X + H + 2 eps2.
inline SemSpec iv_base() {
  SemSpec spec;
  spec.p = 1;
  spec.A = Matrix::Zero(2, 2);
  spec.A(1, 0) = 2.0;
  spec.noise_cov.resize(2, 2);
  spec.noise_cov << 2.0, 1.0, 1.0, 5.0;
  return spec;
}

}  // namespace detail

/// Binary instrument with a mean shift of 2 on X.
inline SemSpec iv_strong() {
  SemSpec spec = detail::iv_base();
  InterventionSpec on = detail::observational("1", 2);
  on.mean_shift(0) = 2.0;
  spec.environments = {detail::observational("0", 2), on};
  return spec;
}

/// Binary instrument acting through 2 e (0.25 + eps3): mean shift 0.5 and
/// extra variance 4 on X.
inline SemSpec iv_weak() {
  SemSpec spec = detail::iv_base();
  InterventionSpec on = detail::observational("1", 2);
  on.mean_shift(0) = 0.5;
  on.cov(0, 0) = 4.0;
  spec.environments = {detail::observational("0", 2), on};
  return spec;
}

inline SemSpec builtin_spec(std::string_view name, const BuiltinParams& params = {}) {
  if (name == "sem_example") return sem_example(params);
  if (name == "sem_A") return sem_A(params);
  if (name == "sem_B") return sem_B(params);
  if (name == "sem_C") return sem_C(params.p, params.sigma);
  if (name == "iv_strong") return iv_strong();
  if (name == "iv_weak") return iv_weak();
  throw ValidationError(ValidationKind::unknown_name, "unknown builtin spec '" + std::string(name) + "'");
}

}  // namespace cdantzig

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <cdantzig/cdantzig.hpp>

namespace testing_oracles {

using cdantzig::GramShift;
using cdantzig::Matrix;
using cdantzig::Vector;

/// Grid search for the minimum-l1 beta in [-3, 3]^p (p <= 3, step 1e-3) with
/// max_e ||Z^e - G^e beta||_inf <= lambda. The last coordinate is scanned
/// exactly: for fixed leading coordinates its feasible grid values form an
/// index interval. Returns nullopt when nothing is feasible or when the
/// minimal-l1 grid points spread by more than `unique_tol`.
inline std::optional<Vector> brute_force_regularized(const GramShift& g, double lambda, double unique_tol = 2e-3) {
  const int p = g.p;
  const double h = 1e-3;
  const int m = 3000;
  long best = std::numeric_limits<long>::max();
  std::vector<std::vector<int>> argmins;
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  const int outer = p - 1;
  long outer_count = 1;
  for (int k = 0; k < outer; ++k) outer_count *= 2 * m + 1;
  Vector lead(p);
  for (long c = 0; c < outer_count; ++c) {
    long rest = c;
    long lead_l1 = 0;
    for (int k = 0; k < outer; ++k) {
      idx[static_cast<std::size_t>(k)] = static_cast<int>(rest % (2 * m + 1)) - m;
      rest /= 2 * m + 1;
      lead_l1 += std::abs(idx[static_cast<std::size_t>(k)]);
    }
    if (lead_l1 > best) continue;
    // interval of t = last index with |Z_j - G_j,lead b_lead - G_j,last t h| <= lambda
    double lo = -m, hi = m;
    bool ok = true;
    for (const auto& pair : g.per_env) {
      for (int j = 0; j < p && ok; ++j) {
        double r = pair.Z(j);
        for (int k = 0; k < outer; ++k) r -= pair.G(j, k) * idx[static_cast<std::size_t>(k)] * h;
        const double a = pair.G(j, p - 1) * h;
        if (a == 0.0) {
          if (std::fabs(r) > lambda) ok = false;
          continue;
        }
        double t1 = (r - lambda) / a, t2 = (r + lambda) / a;
        if (t1 > t2) std::swap(t1, t2);
        lo = std::max(lo, t1);
        hi = std::min(hi, t2);
        if (lo > hi) ok = false;
      }
    }
    if (!ok) continue;
    const long tlo = static_cast<long>(std::ceil(lo - 1e-9));
    const long thi = static_cast<long>(std::floor(hi + 1e-9));
    if (tlo > thi) continue;
    const long t = tlo > 0 ? tlo : (thi < 0 ? thi : 0);
    // recheck the rounded point exactly
    Vector b(p);
    for (int k = 0; k < outer; ++k) b(k) = idx[static_cast<std::size_t>(k)] * h;
    b(p - 1) = static_cast<double>(t) * h;
    bool feasible = true;
    for (const auto& pair : g.per_env) {
      if (cdantzig::norm_inf(pair.Z - pair.G * b) > lambda) feasible = false;
    }
    if (!feasible) continue;
    const long l1 = lead_l1 + std::labs(t);
    if (l1 < best) {
      best = l1;
      argmins.clear();
    }
    if (l1 == best) {
      std::vector<int> point(idx.begin(), idx.begin() + outer);
      point.push_back(static_cast<int>(t));
      argmins.push_back(point);
    }
  }
  if (argmins.empty()) return std::nullopt;
  for (const auto& a : argmins) {
    for (int k = 0; k < p; ++k) {
      if (std::abs(a[static_cast<std::size_t>(k)] - argmins[0][static_cast<std::size_t>(k)]) * h > unique_tol + 1e-12) {
        return std::nullopt;
      }
    }
  }
  Vector out(p);
  for (int k = 0; k < p; ++k) out(k) = argmins[0][static_cast<std::size_t>(k)] * h;
  return out;
}

/// Random gram with `pairs` (Z, G) pairs: symmetric G, Z = G b + noise.
inline GramShift random_small_gram(cdantzig::RngStream& rng, int p, int pairs) {
  GramShift g;
  g.p = p;
  // a single pair stands for two environments
  const int envs = pairs == 1 ? 2 : pairs;
  for (int e = 0; e < envs; ++e) g.labels.push_back(std::to_string(e + 1));
  g.sample_sizes.assign(g.labels.size(), 1);
  Vector b(p);
  for (int k = 0; k < p; ++k) b(k) = rng.next_uniform() < 0.3 ? 0.0 : 2.0 * rng.next_uniform() - 1.0;
  for (int e = 0; e < pairs; ++e) {
    Matrix a(p, p);
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
    }
    const Matrix gm = a + a.transpose();
    Vector z = gm * b;
    for (int i = 0; i < p; ++i) z(i) += 0.2 * rng.next_normal();
    g.per_env.push_back({z, gm});
  }
  return g;
}

}  // namespace testing_oracles

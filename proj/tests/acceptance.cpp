// One line per acceptance criterion; exit status 1 when any criterion fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <cdantzig/cdantzig.hpp>

#include "oracles.hpp"

using namespace cdantzig;

namespace {

constexpr std::uint64_t kSeed = 20240801;
constexpr double kInf = std::numeric_limits<double>::infinity();

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int count(const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); }

Outcome worked_example() {
  Matrix g(3, 3);
  g << 15.9, 6.5, 16.1, 6.5, 3.2, 6.5, 16.1, 6.5, 19.1;
  Vector z(3);
  z << 6.4, 3.2, 6.5;
  GramShift gram;
  gram.p = 3;
  gram.labels = {"1", "2"};
  gram.sample_sizes = {1000, 1000};
  gram.per_env = {{z, g}};
  const Vector b = fit_closed_form(gram).beta;
  Vector target(3);
  target << -0.04, 1.00, 0.03;
  const double d = norm_inf(b - target);
  return {d <= 0.05, fmt("beta_hat = (%.4f, %.4f, %.4f), distance %.4f (limit 0.05)", b(0), b(1), b(2), d)};
}

Outcome worked_example_end_to_end() {
  const SemSampler sampler(sem_example());
  const int reps = 200;
  std::vector<int> ok(reps, 0);
  parallel_for(reps, threads(), [&](std::size_t r) {
    const auto envs = simulate_all(sampler, 1000, kSeed, r);
    const DantzigFit fit = fit_unregularized(envs[0], envs[1]);
    ok[r] = fit.pvalues(1) < 0.001 && fit.pvalues(0) > 0.05 && fit.pvalues(2) > 0.05 ? 1 : 0;
  });
  const double frac = count(ok) / static_cast<double>(reps);
  return {frac >= 0.90, fmt("pattern in %.3f of %d replicates (need 0.90)", frac, reps)};
}

Outcome coverage_sem_a() {
  CoverageConfig cfg;
  cfg.n_totals = {500, 1000};
  cfg.seed = kSeed;
  cfg.threads = threads();
  const auto rows = coverage_study(sem_A(), cfg);
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    pass = pass && row.coverage >= 0.92 && row.coverage <= 0.98;
    detail += fmt("n=%zu coverage %.3f; ", row.n_total, row.coverage);
  }
  const double len = rows[1].avg_length;
  pass = pass && len >= 0.12 && len <= 0.25;
  detail += fmt("n=1000 length %.4f (need [0.12, 0.25])", len);
  return {pass, detail};
}

Outcome coverage_sem_b() {
  CoverageConfig cfg;
  cfg.n_totals = {1000};
  cfg.seed = kSeed;
  cfg.threads = threads();
  const auto row = coverage_study(sem_B(), cfg).front();
  return {row.coverage >= 0.92 && row.coverage <= 0.98,
          fmt("n=1000 coverage %.3f (length %.4f, %zu failures)", row.coverage, row.avg_length, row.failures)};
}

Outcome iv_comparison() {
  IvConfig cfg;
  cfg.n_per_env = {100};
  cfg.seed = kSeed;
  cfg.threads = threads();
  const auto rows = iv_compare(cfg);
  const IvRow& strong = rows[0];
  const IvRow& weak = rows[1];
  const bool pass = strong.se_dantzig.mean <= 0.03 && strong.se_wald.mean <= 0.03 && weak.se_dantzig.mean <= 0.05 &&
                    weak.se_wald.mean >= 1.0;
  return {pass, fmt("strong: dantzig %.4f wald %.4f; weak: dantzig %.4f wald %.1f", strong.se_dantzig.mean,
                    strong.se_wald.mean, weak.se_dantzig.mean, weak.se_wald.mean)};
}

Outcome lp_reduction_oracle() {
  RngStream rng(derive_stream_key(kSeed, "acceptance_lp_oracle", 0));
  const int trials = 200;
  std::vector<GramShift> grams;
  std::vector<double> lambdas;
  for (int t = 0; t < trials; ++t) {
    const int p = 1 + t % 3;
    grams.push_back(testing_oracles::random_small_gram(rng, p, t % 4 == 3 ? 2 : 1));
    lambdas.push_back((0.1 + 0.5 * rng.next_uniform()) * lambda_max(grams.back()));
  }
  std::vector<double> err(trials, -1.0);
  // whether the LP point is feasible with l1 no larger than the grid optimum
  std::vector<int> no_worse(trials, 0);
  parallel_for(trials, threads(), [&](std::size_t t) {
    const auto oracle = testing_oracles::brute_force_regularized(grams[t], lambdas[t]);
    if (!oracle) return;
    const RegFit fit = fit_regularized(grams[t], lambdas[t]);
    err[t] = fit.feasible() ? norm_inf(fit.beta - *oracle) : kInf;
    if (fit.feasible() && zstar(grams[t], fit.beta) <= lambdas[t] * (1.0 + 1e-12) &&
        fit.beta.lpNorm<1>() <= oracle->lpNorm<1>() + 1e-12) {
      no_worse[t] = 1;
    }
  });
  int compared = 0, bad = 0;
  double worst = 0.0;
  for (double e : err) {
    if (e < 0.0) continue;
    ++compared;
    worst = std::max(worst, e);
    bad += e > 2e-3 ? 1 : 0;
  }
  return {compared > 0 && bad == 0,
          fmt("%d of %d oracle optima unique; %d beyond 2e-3; worst %.2e; LP point feasible with l1 <= grid optimum "
              "in %d of %d",
              compared, trials, bad, worst, count(no_worse), compared)};
}

Outcome lemma_one() {
  const SemSpec spec = sem_C(6, 2.5);
  const SemSampler sampler(spec);
  const Vector b0 = true_beta(spec);
  const int reps = 200;
  std::vector<int> checked(reps, 0), violated(reps, 0);
  parallel_for(reps, threads(), [&](std::size_t r) {
    const auto envs = simulate_all(sampler, 100, kSeed, r);
    const GramShift g = prepare_gram(envs, {true, true});
    const double lambda = 1.25 * zstar(g, b0);
    const RegFit fit = fit_regularized(g, lambda);
    if (!fit.feasible()) return;
    std::vector<Matrix> gs;
    for (const auto& pair : g.per_env) gs.push_back(pair.G);
    for (const double q : {1.0, kInf}) {
      const double c = ccif(gs, {1}, q);
      if (!(c > 1e-8)) continue;
      const Vector d = fit.beta - b0;
      const double e = std::isinf(q) ? norm_inf(d) : d.lpNorm<1>();
      ++checked[r];
      violated[r] += e <= lemma1_bound(lambda, 1, q, c) ? 0 : 1;
    }
  });
  const int n = count(checked), v = count(violated);
  return {n > 0 && v == 0, fmt("%d (instance, q) checks, %d violations", n, v)};
}

Outcome lemma_five() {
  RngStream rng(derive_stream_key(kSeed, "acceptance_lemma5", 0));
  const int trials = 1000;
  int violations = 0;
  double worst = -kInf;
  for (int t = 0; t < trials; ++t) {
    Matrix g(3, 3), d(3, 3);
    for (int i = 0; i < 9; ++i) {
      g(i / 3, i % 3) = rng.next_normal();
      d(i / 3, i % 3) = 0.5 * rng.next_normal() * rng.next_uniform();
    }
    std::vector<int> s;
    const int mask = 1 + static_cast<int>(rng.next_uniform() * 7.0) % 7;
    for (int k = 0; k < 3; ++k) {
      if (mask & (1 << k)) s.push_back(k);
    }
    for (const double q : {1.0, kInf}) {
      const auto gap = ccif_perturbation_gap(s, g + d, g, q);
      worst = std::max(worst, gap.lhs - gap.rhs);
      violations += gap.lhs <= gap.rhs + 1e-8 ? 0 : 1;
    }
  }
  return {violations == 0, fmt("%d pairs x 2 norms, %d violations, max lhs - rhs %.3g", trials, violations, worst)};
}

SemSpec random_spec(RngStream& rng) {
  const int p = 2 + static_cast<int>(rng.next_uniform() * 4.0) % 4;
  const int d = p + 1;
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  for (int i = d - 1; i > 0; --i) std::swap(order[i], order[static_cast<int>(rng.next_uniform() * (i + 1)) % (i + 1)]);
  SemSpec s;
  s.p = p;
  s.A = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      if (rng.next_uniform() < 0.5) s.A(order[i], order[j]) = rng.next_normal();
    }
  }
  Matrix l(d, 2);
  for (int i = 0; i < 2 * d; ++i) l(i / 2, i % 2) = 0.5 * rng.next_normal();
  s.noise_cov = Matrix::Identity(d, d) + l * l.transpose();
  s.environments.push_back({"0", Vector::Zero(d), Matrix::Zero(d, d), std::nullopt});
  const int n_int = 1 + (rng.next_uniform() < 0.5 ? 1 : 0);
  for (int e = 0; e < n_int; ++e) {
    InterventionSpec env{std::to_string(e + 1), Vector::Zero(d), Matrix::Zero(d, d), std::nullopt};
    for (int k = 0; k < p; ++k) {
      if (rng.next_uniform() < 0.7) env.cov(k, k) = 0.5 + 4.0 * rng.next_uniform();
    }
    s.environments.push_back(env);
  }
  return s;
}

Outcome identifiability_link() {
  RngStream rng(derive_stream_key(kSeed, "acceptance_identifiability", 0));
  int agree = 0, witness_ok = 0, negatives = 0, positives = 0;
  const int specs = 50;
  for (int t = 0; t < specs; ++t) {
    const SemSpec s = random_spec(rng);
    const auto rep = check_identifiability(s);
    const double cond = condition_number(pooled_population_gram(s));
    const bool ident = rep.verdict == Identifiability::identifiable;
    agree += ident == (cond < 1e10) ? 1 : 0;
    if (ident) {
      ++positives;
      continue;
    }
    ++negatives;
    if (rep.verdict == Identifiability::not_identifiable && rep.witness) {
      bool untouched = true;
      for (const auto& env : s.environments) untouched = untouched && intervention_moment(env)(*rep.witness, *rep.witness) == 0.0;
      witness_ok += untouched ? 1 : 0;
    }
  }
  return {agree == specs && witness_ok == negatives,
          fmt("%d of %d verdicts match the condition number (%d identifiable); %d of %d witnesses unintervened", agree,
              specs, positives, witness_ok, negatives)};
}

Outcome residual_invariance() {
  const SemSpec spec = sem_example();
  const SemSampler sampler(spec);
  const Vector b0 = true_beta(spec);
  Vector off = b0;
  off(0) += 1.0;
  const int reps = 100;
  std::vector<int> quiet(reps, 0), loud(reps, 0);
  parallel_for(reps, threads(), [&](std::size_t r) {
    const auto envs = simulate_all(sampler, 10000, kSeed, r);
    quiet[r] = residual_invariance_test(envs, b0).max_discrepancy() < 4.0 ? 1 : 0;
    loud[r] = residual_invariance_test(envs, off).max_discrepancy() > 4.0 ? 1 : 0;
  });
  return {count(quiet) >= 95 && count(loud) >= 95,
          fmt("at beta0 below 4 in %d/%d; perturbed above 4 in %d/%d", count(quiet), reps, count(loud), reps)};
}

Outcome errors_in_variables() {
  SemSpec spec = sem_example();
  spec.meas_noise_var = Vector::Zero(4);
  spec.meas_noise_var->head(3).setOnes();
  const auto envs = simulate_all(SemSampler(spec), 100000, kSeed);
  const DantzigFit fit = fit_unregularized(envs[0], envs[1]);
  const double err = norm_inf(fit.beta - true_beta(spec));
  const double ols2 = ols_pooled(envs)(1);
  return {err < 0.1 && std::fabs(ols2 - 1.0) > 0.05,
          fmt("dantzig error %.4f (need < 0.1); pooled OLS X2 %.4f (need |. - 1| > 0.05)", err, ols2)};
}

double cv_error(const SemSpec& spec, std::size_t n, std::uint64_t r, std::vector<int>* active = nullptr) {
  const auto envs = simulate_all(SemSampler(spec), n, kSeed, r);
  CvOptions opt;
  opt.seed = kSeed + r;
  const DantzigFit fit = fit_cross_validated(envs, opt);
  if (active) *active = active_set(fit.beta);
  return norm_inf(fit.beta - true_beta(spec));
}

Outcome screening() {
  const SemSpec spec = sem_C(50, 3.5);
  const int reps = 200;
  std::vector<int> hit(reps, 0);
  parallel_for(reps, threads(), [&](std::size_t r) {
    std::vector<int> act;
    cv_error(spec, 200, r, &act);
    hit[r] = std::find(act.begin(), act.end(), 1) != act.end() ? 1 : 0;
  });
  const double frac = count(hit) / static_cast<double>(reps);
  return {frac >= 0.95, fmt("parent active in %.3f of %d replicates (need 0.95)", frac, reps)};
}

Outcome high_dimensional() {
  const int reps = 50;
  std::vector<int> sigma_better(reps, 0), n_better(reps, 0);
  const SemSpec weak = sem_C(50, 2.5), strong = sem_C(50, 3.5), wide = sem_C(100, 3.5);
  parallel_for(reps, threads(), [&](std::size_t r) {
    sigma_better[r] = cv_error(strong, 30, r) < cv_error(weak, 30, r) ? 1 : 0;
    n_better[r] = cv_error(wide, 60, r) < cv_error(wide, 30, r) ? 1 : 0;
  });
  const double a = count(sigma_better) / static_cast<double>(reps);
  const double b = count(n_better) / static_cast<double>(reps);
  return {a >= 0.8 && b >= 0.8, fmt("sigma 2.5 -> 3.5 better in %.2f; n 30 -> 60 better in %.2f (need 0.80)", a, b)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"worked example, printed matrices", worked_example},
      {"worked example, simulated p-values", worked_example_end_to_end},
      {"coverage and length, SEM A", coverage_sem_a},
      {"coverage, SEM B", coverage_sem_b},
      {"IV comparison", iv_comparison},
      {"LP reduction vs brute force", lp_reduction_oracle},
      {"Lemma 1 error bound", lemma_one},
      {"Lemma 5 perturbation bound", lemma_five},
      {"identifiability vs population gram", identifiability_link},
      {"residual invariance", residual_invariance},
      {"errors in variables", errors_in_variables},
      {"screening of the parent", screening},
      {"high-dimensional trends", high_dimensional},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2zu %s  %s: %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

#include <gtest/gtest.h>

#include <cdantzig/cdantzig.hpp>

#include "helpers.hpp"

using namespace cdantzig;
using testing_helpers::gram_of;
using testing_helpers::mat;
using testing_helpers::vec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SemSpec scalar_spec(double var1, double var2) {
  SemSpec s;
  s.p = 1;
  s.A = mat({{0, 0}, {0.7, 0}});
  s.noise_cov = Matrix::Identity(2, 2);
  InterventionSpec e1{"1", Vector::Zero(2), Matrix::Zero(2, 2), std::nullopt};
  InterventionSpec e2 = e1;
  e2.label = "2";
  e1.cov(0, 0) = var1;
  e2.cov(0, 0) = var2;
  s.environments = {e1, e2};
  return s;
}

/// Chain of length p with interventions on the first k0 predictors only.
SemSpec block_design(int p, int k0) {
  SemSpec s = sem_C(p, 2.0);
  for (int k = k0; k < p; ++k) s.environments[1].cov(k, k) = 0.0;
  return s;
}

/// min over cone directions of ||G u||_inf / ||u||_q for p = 2, S = {1},
/// scanned by angle.
double ccif_grid_p2(const Matrix& g, double q) {
  double best = kInf;
  const int steps = 200000;
  for (int i = 0; i < steps; ++i) {
    const double th = 2.0 * std::numbers::pi * i / steps;
    const Vector u = vec({std::cos(th), std::sin(th)});
    if (std::fabs(u(1)) > std::fabs(u(0))) continue;
    const double denom = std::isinf(q) ? norm_inf(u) : u.lpNorm<1>();
    best = std::min(best, norm_inf(g * u) / denom);
  }
  return best;  // |S| = 1
}

}  // namespace

TEST(PopulationGram, IdenticalInterventionsGiveZero) {
  EXPECT_EQ(population_gram(scalar_spec(3, 3), "1", "2"), Matrix::Zero(1, 1));
}

TEST(PopulationGram, ScalarExample) {
  EXPECT_NEAR(population_gram(scalar_spec(0, 15), "1", "2")(0, 0), -15.0, 1e-12);
  EXPECT_NEAR(population_gram(scalar_spec(0, 15), "2", "1")(0, 0), 15.0, 1e-12);
}

TEST(PopulationGram, MatchesEmpiricalGram) {
  const SemSpec spec = sem_example();
  const auto envs = simulate_all(SemSampler(spec), 100000, 20240801);
  const Matrix emp = compute_gram_shift(envs[0], envs[1]).G();
  const Matrix pop = population_gram(spec, "1", "2");
  EXPECT_LT((emp - pop).norm() / pop.norm(), 0.05);
}

TEST(Identifiability, AllIntervened) {
  const auto rep = check_identifiability(sem_C(5, 2.0));
  EXPECT_EQ(rep.verdict, Identifiability::identifiable);
  EXPECT_FALSE(rep.witness.has_value());
  EXPECT_EQ(check_identifiability(sem_example()).verdict, Identifiability::identifiable);
}

TEST(Identifiability, NoInterventions) {
  SemSpec s = sem_C(4, 2.0);
  s.environments[1].cov.setZero();
  const auto rep = check_identifiability(s);
  EXPECT_EQ(rep.verdict, Identifiability::not_identifiable);
  ASSERT_TRUE(rep.witness.has_value());
  EXPECT_EQ(*rep.witness, 0);
}

TEST(Identifiability, BlockDesign) {
  const auto rep = check_identifiability(block_design(8, 3));
  EXPECT_EQ(rep.verdict, Identifiability::not_identifiable);
  ASSERT_TRUE(rep.witness.has_value());
  EXPECT_EQ(*rep.witness, 3);
  EXPECT_NE(rep.explanation.find("X4"), std::string::npos);
}

TEST(Identifiability, NoObservationalEnvironment) {
  EXPECT_EQ(check_identifiability(sem_A()).verdict, Identifiability::identifiable);
  SemSpec s = scalar_spec(1, 2);
  EXPECT_EQ(check_identifiability(s).verdict, Identifiability::conditions_not_checked);
}

TEST(Identifiability, RankDeficientIntervention) {
  SemSpec s = sem_C(3, 1.0);
  s.environments[1].cov = Matrix::Zero(4, 4);
  s.environments[1].cov.topLeftCorner(2, 2) = mat({{1, 1}, {1, 1}});
  s.environments[1].cov(2, 2) = 1.0;
  const auto rep = check_identifiability(s);
  EXPECT_EQ(rep.verdict, Identifiability::conditions_not_checked);
  ASSERT_TRUE(rep.witness.has_value());
  EXPECT_EQ(*rep.witness, 1);
}

TEST(Identifiability, LinksToPopulationGram) {
  EXPECT_LT(condition_number(pooled_population_gram(sem_C(6, 2.0))), 1e10);
  const SemSpec s = block_design(6, 2);
  const auto rep = check_identifiability(s);
  ASSERT_EQ(rep.verdict, Identifiability::not_identifiable);
  const Matrix g = pooled_population_gram(s);
  // the null space is spanned by directions living on X3..X6
  const Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  const Vector v = es.eigenvectors().col(0);
  EXPECT_LT(std::fabs(es.eigenvalues()(0)), 1e-10);
  EXPECT_LT(v.head(2).norm(), 1e-8);
}

TEST(Zstar, Examples) {
  const GramShift g = gram_of(vec({2.5}), mat({{2}}));
  EXPECT_DOUBLE_EQ(zstar(g, vec({1})), 0.5);
  EXPECT_DOUBLE_EQ(zstar(g, vec({1.25})), 0.0);
  const GramShift h = gram_of(vec({0.3, -4.0}), mat({{1, 2}, {2, 1}}));
  EXPECT_DOUBLE_EQ(zstar(h, Vector::Zero(2)), 4.0);
  EXPECT_LT(zstar(h, fit_closed_form(h).beta), 1e-15);
  EXPECT_THROW(zstar(h, Vector::Zero(3)), ValidationError);
}

TEST(Zstar, MultiEnvironmentIsMaximum) {
  GramShift g;
  g.p = 1;
  g.labels = {"a", "b", "c"};
  g.sample_sizes = {1, 1, 1};
  g.per_env = {{vec({1}), mat({{1}})}, {vec({3}), mat({{1}})}, {vec({-2}), mat({{2}})}};
  EXPECT_DOUBLE_EQ(zstar(g, vec({0.5})), 3.0);
}

TEST(Zstar, LemmaThreeTail) {
  const SemSpec spec = sem_C(20, 2.5);
  const SemSampler sampler(spec);
  const Vector b0 = true_beta(spec);
  const double bound = zstar_bound(spec, "0", "1", 500, 500, std::log(500.0));
  const int reps = 500;
  std::vector<int> below(reps, 0);
  parallel_for(reps, 2, [&](std::size_t r) {
    const auto envs = simulate_all(sampler, 500, 20240801, r);
    below[r] = zstar(prepare_gram(envs, {false, false}), b0) <= bound ? 1 : 0;
  });
  EXPECT_GE(std::accumulate(below.begin(), below.end(), 0), 495);
}

TEST(Ccif, IdentitySup) {
  EXPECT_NEAR(ccif(Matrix::Identity(3, 3), {0}, kInf), 1.0, 1e-12);
}

TEST(Ccif, NullSpaceInCone) {
  EXPECT_NEAR(ccif(mat({{1, -1}, {-1, 1}}), {0}, kInf), 0.0, 1e-12);
  EXPECT_NEAR(ccif(mat({{1, -1}, {-1, 1}}), {0}, 1.0), 0.0, 1e-12);
}

TEST(Ccif, IdentityOneNorm) {
  EXPECT_NEAR(ccif(Matrix::Identity(2, 2), {0}, 1.0), 0.5, 1e-12);
  EXPECT_NEAR(ccif_grid_p2(Matrix::Identity(2, 2), 1.0), 0.5, 1e-6);
}

TEST(Ccif, RandomGridOracle) {
  RngStream rng(derive_stream_key(3, "ccif_grid", 0));
  for (int t = 0; t < 10; ++t) {
    Matrix g(2, 2);
    for (int i = 0; i < 4; ++i) g(i / 2, i % 2) = rng.next_normal();
    for (double q : {1.0, kInf}) {
      EXPECT_NEAR(ccif(g, {0}, q), ccif_grid_p2(g, q), 1e-3 * (1.0 + g.norm())) << t << " q=" << q;
    }
  }
}

TEST(Ccif, Homogeneity) {
  const Matrix g = mat({{2, 0.5, -1}, {0.5, 1, 0.3}, {-1, 0.3, 3}});
  for (double q : {1.0, kInf}) {
    const double base = ccif(g, {0, 2}, q);
    EXPECT_GT(base, 0.0);
    EXPECT_NEAR(ccif(-2.5 * g, {0, 2}, q), 2.5 * base, 1e-10);
  }
}

TEST(Ccif, UnsupportedQAndBadSupport) {
  EXPECT_THROW(ccif(Matrix::Identity(2, 2), {0}, 2.0), ValidationError);
  EXPECT_THROW(ccif(Matrix::Identity(2, 2), {}, 1.0), ValidationError);
  EXPECT_THROW(ccif(Matrix::Identity(2, 2), {2}, 1.0), ValidationError);
}

TEST(Ccif, PerturbationGapExamples) {
  const Matrix g = mat({{2, 0.5, -1}, {0.5, 1, 0.3}, {-1, 0.3, 3}});
  const auto same = ccif_perturbation_gap({1}, g, g, 1.0);
  EXPECT_EQ(same.lhs, 0.0);
  EXPECT_EQ(same.rhs, 0.0);
  const double eps = 0.125;
  const auto shifted = ccif_perturbation_gap({1}, g + eps * Matrix::Ones(3, 3), g, kInf);
  EXPECT_EQ(shifted.rhs, 2.0 * eps);
  EXPECT_LE(shifted.lhs, shifted.rhs + 1e-8);
}

TEST(Ccif, LemmaFiveRandomPairs) {
  RngStream rng(derive_stream_key(20240801, "lemma5", 0));
  for (int t = 0; t < 100; ++t) {
    Matrix g(3, 3), d(3, 3);
    for (int i = 0; i < 9; ++i) {
      g(i / 3, i % 3) = rng.next_normal();
      d(i / 3, i % 3) = 0.3 * rng.next_normal();
    }
    const std::vector<int> s = t % 2 ? std::vector<int>{0} : std::vector<int>{0, 2};
    for (double q : {1.0, kInf}) {
      const auto gap = ccif_perturbation_gap(s, g + d, g, q);
      EXPECT_LE(gap.lhs, gap.rhs + 1e-8) << t;
    }
  }
}

TEST(ResidualInvariance, IdenticalDataGiveZero) {
  const auto envs = simulate_all(SemSampler(sem_example()), 50, 1);
  std::vector<EnvDataset> same{envs[0], envs[0]};
  same[1].env_label = "copy";
  EXPECT_EQ(residual_invariance_test(same, vec({0, 1, 0})).max_discrepancy(), 0.0);
}

TEST(ResidualInvariance, TruthAndPerturbation) {
  const SemSpec spec = sem_example();
  const auto envs = simulate_all(SemSampler(spec), 10000, 20240801);
  const Vector b0 = true_beta(spec);
  const auto at_truth = residual_invariance_test(envs, b0);
  EXPECT_LT(at_truth.max_discrepancy(), 4.0);
  ASSERT_EQ(at_truth.envs.size(), 2u);
  const auto off = residual_invariance_test(envs, b0 + vec({1, 0, 0}));
  EXPECT_GT(off.max_variance_discrepancy, 4.0);
}

TEST(ResidualInvariance, HeldOutEnvironment) {
  // a new environment with stronger interventions on the same coordinates
  SemSpec spec = sem_example();
  InterventionSpec extra = spec.environments[1];
  extra.label = "3";
  extra.cov.topLeftCorner(3, 3) *= 8.0;
  extra.mean_shift.head(3) = vec({2, -1, 3});
  spec.environments.push_back(extra);
  const auto envs = simulate_all(SemSampler(spec), 10000, 20240801);
  EXPECT_LT(residual_invariance_test(envs, true_beta(spec)).max_discrepancy(), 4.0);
}

TEST(ResidualInvariance, Errors) {
  const auto envs = simulate_all(SemSampler(sem_example()), 5, 1);
  EXPECT_THROW(residual_invariance_test(std::span(envs).first(1), vec({0, 1, 0})), ValidationError);
  EXPECT_THROW(residual_invariance_test(envs, vec({0, 1})), ValidationError);
}

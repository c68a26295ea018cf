#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include <cdantzig/cdantzig.hpp>

#include "helpers.hpp"

using namespace cdantzig;
using testing_helpers::make_env;
using testing_helpers::mat;
using testing_helpers::vec;

TEST(Centering, IdenticalSingleRowsBecomeZero) {
  const EnvDataset envs[] = {make_env("a", {{3, -1}}, {2}), make_env("b", {{3, -1}}, {2})};
  const auto c = center_datasets(envs);
  for (const auto& e : c.envs) {
    EXPECT_EQ(e.X, Matrix::Zero(1, 2));
    EXPECT_EQ(e.Y, Vector::Zero(1));
  }
}

TEST(Centering, SubtractsUnweightedMeanOfMeans) {
  // env1 mean (2, 0), env2 mean (0, 2); env2 has three rows so a pooled mean would differ
  const EnvDataset envs[] = {make_env("1", {{2}}, {0}), make_env("2", {{0}, {0}, {0}}, {1, 2, 3})};
  const auto c = center_datasets(envs);
  EXPECT_EQ(c.mean, vec({1, 1}));
  EXPECT_EQ(c.envs[0].X(0, 0), 1.0);
  EXPECT_EQ(c.envs[1].Y, vec({0, 1, 2}));
}

TEST(Centering, Idempotent) {
  const EnvDataset envs[] = {make_env("1", {{1, 2}, {3, 5}}, {1, 0}), make_env("2", {{0, 1}}, {4})};
  const auto once = center_datasets(envs);
  const auto twice = center_datasets(once.envs);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_LT(max_norm(twice.envs[e].X - once.envs[e].X), 1e-15);
    EXPECT_LT(norm_inf(twice.envs[e].Y - once.envs[e].Y), 1e-15);
  }
}

TEST(Centering, AllEmptyIsAnError) {
  EnvDataset a;
  a.env_label = "1";
  a.X.resize(0, 2);
  EnvDataset b = a;
  b.env_label = "2";
  const EnvDataset envs[] = {a, b};
  EXPECT_THROW(center_datasets(envs), ValidationError);
}

TEST(GramShift, SameDataGivesZero) {
  const auto e = make_env("1", {{1, 2}, {3, 4}}, {1, 1});
  auto e2 = e;
  e2.env_label = "2";
  const GramShift g = compute_gram_shift(e, e2);
  EXPECT_EQ(g.Z(), Vector::Zero(2));
  EXPECT_EQ(g.G(), Matrix::Zero(2, 2));
}

TEST(GramShift, HandExample) {
  const GramShift g = compute_gram_shift(make_env("1", {{1}, {2}}, {1, 2}), make_env("2", {{0}, {1}}, {0, 0}));
  EXPECT_EQ(g.Z()(0), 2.5);
  EXPECT_EQ(g.G()(0, 0), 2.0);
  EXPECT_EQ(g.per_env.size(), 1u);
}

TEST(GramShift, Errors) {
  EnvDataset empty;
  empty.env_label = "2";
  empty.X.resize(0, 1);
  EXPECT_THROW(compute_gram_shift(make_env("1", {{1}}, {1}), empty), ValidationError);
  EXPECT_THROW(compute_gram_shift(make_env("1", {{1}}, {1}), make_env("2", {{1, 2}}, {1})), ValidationError);
}

TEST(GramShift, WorkedExampleMatricesWithinMonteCarloTolerance) {
  const SemSampler sampler(sem_example());
  const auto envs = simulate_all(sampler, 1000, 20240801);
  // the displayed matrices are oriented environment 2 minus environment 1
  const GramShift g = compute_gram_shift(envs[1], envs[0]);
  const Matrix g_paper = mat({{15.9, 6.5, 16.1}, {6.5, 3.2, 6.5}, {16.1, 6.5, 19.1}});
  const Vector z_paper = vec({6.4, 3.2, 6.5});
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(g.Z()(i), z_paper(i), 0.2 * std::fabs(z_paper(i))) << i;
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g.G()(i, j), g_paper(i, j), 0.2 * std::fabs(g_paper(i, j))) << i << j;
  }
}

TEST(MultiGram, TwoEnvironmentsAreAntisymmetric) {
  const EnvDataset envs[] = {make_env("1", {{1, 0}, {2, 1}}, {1, 3}), make_env("2", {{0, 1}, {1, 1}}, {0, 2})};
  const GramShift multi = compute_multi_gram(envs);
  const GramShift pair = compute_gram_shift(envs[0], envs[1]);
  ASSERT_EQ(multi.per_env.size(), 2u);
  EXPECT_EQ(multi.per_env[0].Z, pair.Z());
  EXPECT_EQ(multi.per_env[0].G, pair.G());
  EXPECT_EQ(multi.per_env[1].Z, -pair.Z());
  EXPECT_EQ(multi.per_env[1].G, -pair.G());
}

TEST(MultiGram, IdenticalEnvironmentsGiveZero) {
  const auto e = make_env("1", {{1, 2}, {0, 1}}, {3, 1});
  auto b = e, c = e;
  b.env_label = "2";
  c.env_label = "3";
  const EnvDataset envs[] = {e, b, c};
  for (const auto& pair : compute_multi_gram(envs).per_env) {
    EXPECT_EQ(pair.Z, Vector::Zero(2));
    EXPECT_EQ(pair.G, Matrix::Zero(2, 2));
  }
}

TEST(MultiGram, ThreeEnvironmentHandExample) {
  const EnvDataset envs[] = {make_env("1", {{1}}, {1}), make_env("2", {{2}}, {0}), make_env("3", {{3}}, {0})};
  const GramShift g = compute_multi_gram(envs);
  ASSERT_EQ(g.per_env.size(), 3u);
  EXPECT_EQ(g.per_env[0].Z(0), 1.0);
  EXPECT_EQ(g.per_env[0].G(0, 0), -5.5);
  EXPECT_THROW(compute_multi_gram(std::span<const EnvDataset>(envs, 1)), ValidationError);
}

TEST(Scaling, UnitMomentsSingleSample) {
  const GramShift g = testing_helpers::gram_of(vec({1, 2}), mat({{1, 2}, {3, 4}}));
  const GramShift s = apply_scaling(g, {vec({1, 1}), vec({1, 1})});
  const double f = 1.0 / std::sqrt(2.0);
  EXPECT_DOUBLE_EQ(s.Z()(0), f);
  EXPECT_DOUBLE_EQ(s.Z()(1), 2 * f);
  EXPECT_DOUBLE_EQ(s.G()(1, 0), 3 * f);
  ASSERT_TRUE(s.scaling.has_value());
  EXPECT_DOUBLE_EQ((*s.scaling)(0, 0), f);
}

TEST(Scaling, AppliedTwiceIsRejected) {
  const GramShift g = testing_helpers::gram_of(vec({1}), mat({{1}}));
  const GramShift s = apply_scaling(g, {vec({1}), vec({1})});
  EXPECT_THROW(apply_scaling(s, {vec({1}), vec({1})}), ValidationError);
}

TEST(Scaling, RejectsConstantColumn) {
  const GramShift g = testing_helpers::gram_of(vec({1}), mat({{1}}));
  EXPECT_THROW(apply_scaling(g, {vec({0}), vec({1})}), ValidationError);
}

TEST(Scaling, UnscaledRoundTrips) {
  const GramShift g = testing_helpers::gram_of(vec({1, -3}), mat({{2, 1}, {1, 5}}));
  const GramShift back = unscaled(apply_scaling(g, {vec({2, 3}), vec({1, 7})}));
  EXPECT_LT(norm_inf(back.Z() - g.Z()), 1e-15);
  EXPECT_LT(max_norm(back.G() - g.G()), 1e-15);
}

TEST(GramProperties, RowPermutationIsBitIdentical) {
  const SemSampler sampler(sem_B());
  auto envs = simulate_all(sampler, 500, 3);
  const GramShift before = prepare_gram(envs, {true, true});
  std::mt19937_64 gen(1);
  for (auto& e : envs) {
    std::vector<Eigen::Index> perm(e.n());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    e.X = Matrix(e.X(perm, Eigen::all));
    e.Y = Vector(e.Y(perm));
  }
  const GramShift after = prepare_gram(envs, {true, true});
  EXPECT_EQ(before.Z(), after.Z());
  EXPECT_EQ(before.G(), after.G());
  EXPECT_EQ(before.center, after.center);
}

TEST(GramProperties, ColumnPermutationConjugates) {
  const SemSampler sampler(sem_B());
  auto envs = simulate_all(sampler, 300, 4);
  const GramShift before = compute_gram(envs);
  const std::vector<Eigen::Index> perm{3, 1, 0, 2};
  for (auto& e : envs) e.X = Matrix(e.X(Eigen::all, perm));
  const GramShift after = compute_gram(envs);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(after.Z()(i), before.Z()(perm[i]));
    for (int j = 0; j < 4; ++j) EXPECT_EQ(after.G()(i, j), before.G()(perm[i], perm[j]));
  }
}

TEST(GramProperties, SymmetricAndConsistentWithPopulation) {
  BuiltinParams bp;
  bp.example_noise_var = 16.0;
  const SemSpec spec = sem_example(bp);
  const auto envs = simulate_all(SemSampler(spec), 100000, 20240801);
  const GramShift g = compute_gram(envs);
  EXPECT_TRUE(is_symmetric(g.G(), 1e-12));
  const Matrix pop = population_gram(spec, "1", "2");
  EXPECT_LT((g.G() - pop).norm() / pop.norm(), 0.05);
}

TEST(GramJson, RoundTrip) {
  const SemSampler sampler(sem_example());
  const auto envs = simulate_all(sampler, 50, 9);
  for (bool scale : {false, true}) {
    const GramShift g = prepare_gram(envs, {true, scale});
    const GramShift back = gram_from_json(parse_json_text(gram_to_json(g).dump(), "test"));
    EXPECT_EQ(back.Z(), g.Z());
    EXPECT_EQ(back.G(), g.G());
    EXPECT_EQ(back.labels, g.labels);
    EXPECT_EQ(back.sample_sizes, g.sample_sizes);
    EXPECT_EQ(back.scaling.has_value(), scale);
    EXPECT_EQ(back.center, g.center);
  }
}

TEST(GramJson, RejectsUnknownKeysAndAsymmetry) {
  EXPECT_THROW(gram_from_json(parse_json_text(R"({"p":1,"envs":[],"extra":1})", "t")), ValidationError);
  const char* asym = R"({"p":2,"envs":[{"label":"a","n":1,"Z":[1,1],"G":[1,2,3,4]},
                                       {"label":"b","n":1,"Z":[-1,-1],"G":[-1,-2,-3,-4]}]})";
  EXPECT_THROW(gram_from_json(parse_json_text(asym, "t")), ValidationError);
}

// Copyright 2026 The ptx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ptx/synth.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "checks.hpp"

namespace ptx {
namespace {

RegressionInstance FixedInstance(const Matrix& basis, const Matrix& tasks, const Vector& priv,
                                 double sigma) {
  return {OrthonormalBasis::FromOrthonormal(basis), tasks, sigma, priv};
}

TEST(RandomInstance, DefaultScaleHasPositiveDiversity) {
  Rng rng(1);
  const auto inst = RandomInstance(25, 5, 100, 1.0, 1.0, rng);
  EXPECT_GT(ComputeDiversityStats(inst).nu, 0.0);
  for (Eigen::Index j = 0; j < 100; ++j) EXPECT_NEAR(inst.tasks.row(j).norm(), 1.0, 1e-12);
  EXPECT_NEAR(inst.private_task.norm(), 1.0, 1e-12);
  EXPECT_LT((inst.basis.columns().transpose() * inst.basis.columns() - Matrix::Identity(5, 5)).norm(),
            1e-10);
}

TEST(RandomInstance, FullDimensionSpansEverything) {
  Rng rng(2);
  const auto inst = RandomInstance(6, 6, 3, 1.0, 1.0, rng);
  EXPECT_LT(PrincipalAngleSin(inst.basis, IdentityBasis(6, 6)), 1e-12);
}

TEST(RandomInstance, Deterministic) {
  Rng a(3);
  Rng b(3);
  const auto ia = RandomInstance(10, 3, 7, 0.5, 2.0, a);
  const auto ib = RandomInstance(10, 3, 7, 0.5, 2.0, b);
  EXPECT_TRUE(ia.basis.columns() == ib.basis.columns());
  EXPECT_TRUE(ia.tasks == ib.tasks);
  EXPECT_TRUE(ia.private_task == ib.private_task);
  Rng pa(4);
  Rng pb(4);
  const auto da = SamplePublic(ia, 70, pa);
  const auto db = SamplePublic(ib, 70, pb);
  EXPECT_TRUE(da.inputs == db.inputs);
  EXPECT_TRUE(da.labels == db.labels);
}

TEST(RandomInstance, Errors) {
  Rng rng(5);
  try {
    RandomInstance(3, 4, 1, 1.0, 1.0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidDims);
  }
  EXPECT_THROW(RandomInstance(3, 0, 1, 1.0, 1.0, rng), Error);
  EXPECT_THROW(RandomInstance(3, 1, 0, 1.0, 1.0, rng), Error);
}

TEST(RandomInstance, SuppliedPrivateTask) {
  Rng rng(6);
  Vector alpha(2);
  alpha << 0.6, -0.8;
  const auto inst = RandomInstance(5, 2, 4, 1.0, 1.0, rng, alpha);
  EXPECT_TRUE(inst.private_task == alpha);
}

TEST(SamplePublic, ZeroTasksZeroNoiseGiveZeroLabels) {
  const auto inst = FixedInstance(Matrix::Identity(4, 2), Matrix::Zero(3, 2), Vector::Zero(2), 0.0);
  Rng rng(7);
  const auto data = SamplePublic(inst, 30, rng);
  EXPECT_EQ(data.labels.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SamplePublic, PassThroughCoordinate) {
  const auto inst =
      FixedInstance(Matrix::Identity(4, 2), Matrix(Vector::Unit(2, 0).transpose()), Vector::Zero(2), 0.0);
  Rng rng(8);
  const auto data = SamplePublic(inst, 50, rng);
  EXPECT_TRUE(data.labels == data.inputs.col(0));
}

TEST(SamplePublic, EqualAllocationAndRemainderDropped) {
  Rng rng(9);
  const auto inst = RandomInstance(5, 2, 4, 1.0, 1.0, rng);
  const auto data = SamplePublic(inst, 11, rng);
  ASSERT_EQ(data.rows(), 8);
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_EQ(data.task_index[i], static_cast<int>(i % 4) + 1);
}

TEST(SamplePublic, SecondMomentOfLabels) {
  Rng rng(10);
  const auto inst = RandomInstance(25, 5, 100, 1.0, 1.0, rng);
  const auto data = SamplePublic(inst, 1000000, rng);
  const Vector y2 = data.labels.array().square();
  const double mean = y2.mean();
  const double se = std::sqrt((y2.array() - mean).square().sum() / (y2.size() - 1.0) / y2.size());
  EXPECT_NEAR(mean, 2.0, 3.0 * se);
}

TEST(SamplePrivate, UsesPrivateTask) {
  Rng rng(11);
  const auto inst = FixedInstance(Matrix::Identity(4, 2), Matrix::Zero(3, 2), Vector::Unit(2, 1), 0.0);
  const auto data = SamplePrivate(inst, 40, rng);
  EXPECT_TRUE(data.labels == data.inputs.col(1));
  for (int t : data.task_index) EXPECT_EQ(t, 4);
  const auto zero = FixedInstance(Matrix::Identity(4, 2), Matrix::Zero(3, 2), Vector::Zero(2), 0.0);
  EXPECT_EQ(SamplePrivate(zero, 10, rng).labels.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SamplePrivate, SecondMomentOfLabels) {
  Rng rng(12);
  const auto inst = RandomInstance(25, 5, 100, 1.0, 1.0, rng);
  const auto data = SamplePrivate(inst, 1000000, rng);
  const Vector y2 = data.labels.array().square();
  const double mean = y2.mean();
  const double se = std::sqrt((y2.array() - mean).square().sum() / (y2.size() - 1.0) / y2.size());
  EXPECT_NEAR(mean, 2.0, 3.0 * se);
}

TEST(PopulationExcessRisk, Examples) {
  Rng rng(13);
  const auto inst = RandomInstance(25, 5, 10, 1.0, 1.0, rng);
  const Vector theta = inst.PrivateParameter();
  EXPECT_EQ(PopulationExcessRisk(theta, inst), 0.0);
  EXPECT_NEAR(PopulationExcessRisk(theta + Vector::Unit(25, 0), inst), 0.5, 1e-15);
  EXPECT_THROW(PopulationExcessRisk(Vector::Zero(3), inst), Error);
}

TEST(PopulationExcessRisk, MatchesMonteCarlo) {
  Rng rng(14);
  const auto inst = RandomInstance(25, 5, 10, 1.0, 1.0, rng);
  const Vector w = inst.PrivateParameter() + 0.3 * rng.NormalVector(25);
  const MonteCarloEstimate mc = MonteCarloExcessRisk(w, inst, 1000000, rng);
  EXPECT_NEAR(mc.mean, PopulationExcessRisk(w, inst), 3.0 * mc.standard_error);
}

TEST(DiversityStats, IsotropicTasks) {
  const auto inst = FixedInstance(Matrix::Identity(5, 3), Matrix::Identity(3, 3), Vector::Zero(3), 1.0);
  const DiversityStats s = ComputeDiversityStats(inst);
  EXPECT_NEAR(s.nu, 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(s.kappa_bar, 1.0, 1e-12);
  EXPECT_NEAR(s.kappa, 1.0, 1e-12);
}

TEST(DiversityStats, ZeroRowLowersNu) {
  Matrix a(3, 2);
  a << 1, 0, 0, 1, 0, 0;
  const auto inst = FixedInstance(Matrix::Identity(4, 2), a, Vector::Zero(2), 1.0);
  EXPECT_NEAR(ComputeDiversityStats(inst).nu, 1.0 / 3.0, 1e-14);
  const auto rank_one = FixedInstance(Matrix::Identity(4, 2), Matrix(Vector::Unit(2, 0).transpose()),
                                      Vector::Zero(2), 1.0);
  EXPECT_EQ(ComputeDiversityStats(rank_one).nu, 0.0);
}

TEST(DiversityStats, RandomTasksAgainstSvd) {
  Rng rng(15);
  const auto inst = RandomInstance(25, 5, 100, 1.0, 1.0, rng);
  const DiversityStats s = ComputeDiversityStats(inst);
  Eigen::JacobiSVD<Matrix> svd(inst.tasks);
  const Vector sv2 = svd.singularValues().array().square() / 100.0;
  EXPECT_NEAR(s.nu, sv2[4], 1e-12);
  EXPECT_NEAR(s.kappa, sv2[0] / sv2[4], 1e-9);
  EXPECT_NEAR(s.kappa_bar, sv2.sum() / (5.0 * sv2[4]), 1e-9);
  EXPECT_GE(s.kappa_bar, 1.0);
  EXPECT_GE(s.kappa, s.kappa_bar);
}

TEST(ResidualNoiseVariance, Examples) {
  Rng rng(16);
  const auto inst = RandomInstance(10, 3, 5, 1.0, 1.0, rng);
  EXPECT_NEAR(ResidualNoiseVariance(inst, inst.basis), 1.0, 1e-15);
  // A basis orthogonal to Bα.
  const OrthonormalBasis orth =
      Orthonormalize(Projector::OntoComplement(inst.basis).matrix() * rng.NormalMatrix(10, 3));
  EXPECT_NEAR(ResidualNoiseVariance(inst, orth), 2.0, 1e-12);
  EXPECT_THROW(ResidualNoiseVariance(inst, IdentityBasis(4, 3)), Error);
}

TEST(ResidualNoiseVariance, MatchesMonteCarloAndIndependence) {
  Rng rng(17);
  const auto inst = RandomInstance(25, 5, 100, 1.0, 1.0, rng);
  const OrthonormalBasis bhat = PerturbedBasis(AlignedBasis(inst.basis, inst.PrivateParameter()), 0.4, rng);
  const testing_checks::ResidualCheck c = testing_checks::CheckResidualModel(inst, bhat, 1000000, rng);
  EXPECT_LE(c.max_cross_cov_z, 4.0);
  EXPECT_NEAR(c.empirical_variance, c.predicted_variance, 3.0 * c.variance_se);
}

TEST(DatasetCsv, RoundTripIsExact) {
  Rng rng(18);
  const auto inst = RandomInstance(4, 2, 3, 1.0, 1.0, rng);
  const auto data = SamplePublic(inst, 9, rng);
  std::stringstream ss;
  WriteDatasetCsv(ss, data);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "task_index,y,x_1,x_2,x_3,x_4");
  const auto back = ReadDatasetCsv(ss);
  EXPECT_TRUE(back.inputs == data.inputs);
  EXPECT_TRUE(back.labels == data.labels);
  EXPECT_EQ(back.task_index, data.task_index);
}

TEST(DatasetCsv, MalformedInputThrows) {
  std::stringstream bad("task_index,y,x_1\n1,2\n");
  EXPECT_THROW(ReadDatasetCsv(bad), Error);
  std::stringstream nonnum("task_index,y,x_1\n1,abc,3\n");
  EXPECT_THROW(ReadDatasetCsv(nonnum), Error);
}

TEST(FilterTask, SelectsRows) {
  Rng rng(19);
  const auto inst = RandomInstance(4, 2, 3, 1.0, 1.0, rng);
  const auto data = SamplePublic(inst, 9, rng);
  const auto two = FilterTask(data, 2);
  ASSERT_EQ(two.rows(), 3);
  EXPECT_TRUE(two.inputs.row(0) == data.inputs.row(1));
}

}  // namespace
}  // namespace ptx

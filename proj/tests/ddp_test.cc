#include "mddp/ddp.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mddp/casestudies.hpp"

namespace mddp {
namespace {

// Exact V_1 of the scalar instance: min over u of u^2 + (x + u)^2 with
// x + u in [-2, 2], plus x^2.
double ScalarV1(double x) {
  double u = -0.5 * x;
  u = std::clamp(u, std::max(-2.0, -2.0 - x), std::min(2.0, 2.0 - x));
  return x * x + u * u + (x + u) * (x + u);
}

DdpOptions ScalarOptions() {
  DdpOptions o;
  o.relaxation = {4, false};
  o.epsilon = 1e-5;
  return o;
}

TEST(ValueFunctionStackTest, HoldsTerminalAndCuts) {
  const MultistageProblem p = BuildScalarTwoStage();
  ValueFunctionStack stack(p);
  EXPECT_EQ(stack.horizon(), 2);
  EXPECT_TRUE(stack.epigraph(2).terminal);
  EXPECT_FALSE(stack.epigraph(1).terminal);
  EXPECT_DOUBLE_EQ(stack.Evaluate(2, std::vector<double>{1.5}), 2.25);
  EXPECT_TRUE(std::isinf(stack.Evaluate(1, std::vector<double>{0.0})));
  stack.AddCut(1, Polynomial::Constant(1, -1.0));
  stack.AddCut(1, Polynomial::Variable(1, 0));
  EXPECT_EQ(stack.epigraph(1).cuts.size(), 2u);
  EXPECT_DOUBLE_EQ(stack.Evaluate(1, std::vector<double>{0.5}), 0.5);
  EXPECT_DOUBLE_EQ(stack.Evaluate(1, std::vector<double>{-1.5}), -1.0);
  EXPECT_TRUE(stack.cuts(0).empty());
}

TEST(DdpTest, ZeroCostProblemConvergesImmediately) {
  const MultistageProblem p = BuildScalarTwoStage(true);
  const DdpResult r = RunDdp(p, ScalarOptions());
  ASSERT_TRUE(r.converged);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_NEAR(r.history[0].rho_ub, 0.0, 1e-7);
  EXPECT_NEAR(r.history[0].theta_lb, 0.0, 1e-7);
  for (const auto& q : r.history[0].state_moments) EXPECT_NEAR(q.mass(), 1.0, 1e-7);
  for (int t = 0; t < 2; ++t) {
    for (double x : {-1.5, 0.0, 1.5}) {
      EXPECT_NEAR(r.stack.cuts(t).front().Evaluate(std::vector<double>{x}), 0.0, 1e-5);
    }
  }
}

TEST(DdpTest, InitialBackwardUnderApproximates) {
  const MultistageProblem p = BuildScalarTwoStage();
  const ValueFunctionStack stack = InitialBackward(p, ScalarOptions());
  ASSERT_EQ(stack.cuts(1).size(), 1u);
  for (int i = 0; i <= 20; ++i) {
    const double x = -2.0 + 0.2 * i;
    EXPECT_LE(stack.Evaluate(1, std::vector<double>{x}), ScalarV1(x) + 1e-6) << x;
  }
}

TEST(DdpTest, ScalarRunConvergesWithLemmaProperties) {
  const MultistageProblem p = BuildScalarTwoStage();
  const DdpResult r = RunDdp(p, ScalarOptions());
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.gap(), 1e-5);
  // The exact optimum from x0 = 1 is 1.6.
  EXPECT_NEAR(r.history.back().theta_lb, 1.6, 1e-4);
  for (std::size_t z = 0; z < r.history.size(); ++z) {
    const IterationRecord& rec = r.history[z];
    EXPECT_LE(rec.theta_lb, 1.6 + 1e-6);
    if (z > 0) EXPECT_GE(rec.theta_lb, r.history[z - 1].theta_lb - 1e-7);
    double ub = rec.state_moments.back().Apply(p.terminal_cost);
    for (double c : rec.stage_costs) ub += c;
    EXPECT_NEAR(ub, rec.rho_ub, 1e-9);
    EXPECT_DOUBLE_EQ(rec.theta_lb, rec.theta[0]);
    if (rec.theta_lb < rec.rho_ub - 1e-9) {
      ASSERT_EQ(rec.invalidation.size(), 1u);
    }
  }
}

TEST(DdpTest, RunIsDeterministic) {
  const MultistageProblem p = BuildScalarTwoStage();
  const DdpResult a = RunDdp(p, ScalarOptions());
  const DdpResult b = RunDdp(p, ScalarOptions());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t z = 0; z < a.history.size(); ++z) {
    EXPECT_EQ(a.history[z].rho_ub, b.history[z].rho_ub);
    EXPECT_EQ(a.history[z].theta_lb, b.history[z].theta_lb);
    EXPECT_EQ(a.history[z].rho, b.history[z].rho);
    EXPECT_EQ(a.history[z].theta, b.history[z].theta);
  }
}

TEST(DdpTest, MaxIterationsReportsNotConverged) {
  // The scalar instance closes in one sweep; storage needs several.
  const MultistageProblem p =
      BuildSingleStorage(BoreholeParams::Single(), DemandProfile::Synthetic());
  DdpOptions o;
  o.relaxation = VariantOptions("affine-2");
  o.epsilon = 1e-12;
  o.max_iterations = 2;
  const DdpResult r = RunDdp(p, o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(DdpTest, DualPairOnScalarStage) {
  const MultistageProblem p = BuildScalarTwoStage();
  const MomentVector q = MomentsOfDistribution(
      InitialDistribution::Uniform({{-2.0, 2.0}}), MomentSpace::State, 4);
  const EpigraphSet epi = EpigraphSet::Terminal(p.state_sets[2], p.terminal_cost);
  const DualPairReport rep = DualPairCheck(p.stages[1], q, epi, {4, false});
  EXPECT_EQ(rep.forward_status, SolveStatus::Optimal);
  EXPECT_EQ(rep.backward_status, SolveStatus::Optimal);
  EXPECT_LE(rep.gap, 1e-6);
}

TEST(DdpTest, DualPairOnZeroProblem) {
  const MultistageProblem p = BuildScalarTwoStage(true);
  const MomentVector q = MomentsOfDistribution(
      InitialDistribution::Uniform({{-2.0, 2.0}}), MomentSpace::State, 4);
  const EpigraphSet epi = EpigraphSet::Terminal(p.state_sets[2], p.terminal_cost);
  const DualPairReport rep = DualPairCheck(p.stages[1], q, epi, {4, false});
  EXPECT_LE(rep.gap, 1e-7);
  EXPECT_NEAR(rep.rho, 0.0, 1e-7);
}

}  // namespace
}  // namespace mddp

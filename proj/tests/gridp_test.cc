#include "mddp/gridp.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "mddp/casestudies.hpp"

namespace mddp {
namespace {

// Straight backward induction for the scalar instance on a uniform grid over
// [-2, 2], written without the library's sweep or interpolation.
std::vector<std::vector<double>> BruteForceScalar(int n) {
  const double h = 4.0 / (n - 1);
  auto at = [&](int i) { return -2.0 + i * h; };
  auto interp = [&](const std::vector<double>& v, double x) {
    const double s = std::clamp((x + 2.0) / h, 0.0, n - 1.0);
    const int i = std::min(static_cast<int>(s), n - 2);
    const double w = s - i;
    return (1 - w) * v[i] + w * v[i + 1];
  };
  std::vector<std::vector<double>> V(3, std::vector<double>(n));
  for (int i = 0; i < n; ++i) V[2][i] = at(i) * at(i);
  for (int t = 1; t >= 0; --t) {
    for (int i = 0; i < n; ++i) {
      double best = 1e300;
      for (int j = 0; j < n; ++j) {
        const double x = at(i), u = at(j), next = x + u;
        if (next < -2.0 - 1e-9 || next > 2.0 + 1e-9) continue;
        if (x * x + u * u > 1.1 * 8.0) continue;
        best = std::min(best, x * x + u * u + interp(V[t + 1], next));
      }
      V[t][i] = best;
    }
  }
  return V;
}

MultistageProblem SingleStorage() {
  return BuildSingleStorage(BoreholeParams::Single(), DemandProfile::Synthetic());
}

TEST(GridSpecTest, ParseBroadcastsAndValidates) {
  const MultistageProblem p = SingleStorage();
  const GridSpec g = GridSpec::Parse("41x1001x1001", p);
  ASSERT_EQ(g.state.size(), 1u);
  ASSERT_EQ(g.control.size(), 2u);
  EXPECT_EQ(g.state[0].points, 41);
  EXPECT_EQ(g.control[1].points, 1001);
  EXPECT_EQ(GridSpec::Parse("41x1001", p).ToString(), g.ToString());
  EXPECT_DOUBLE_EQ(g.StatePoints(), 41.0);
  EXPECT_DOUBLE_EQ(g.ControlPoints(), 1001.0 * 1001.0);
  EXPECT_THROW(GridSpec::Parse("41x1", p), std::invalid_argument);
  EXPECT_THROW(GridSpec::Parse("abc", p), std::invalid_argument);
  GridSpec bad = g;
  bad.state[0].hi = 0.5;
  EXPECT_THROW(bad.Validate(p), std::invalid_argument);
}

TEST(GridValueFunctionTest, InterpolationIsExactOnMultilinearFunctions) {
  GridValueFunction v({{-1.0, 1.0, 5}, {0.0, 2.0, 3}}, 0);
  auto f = [](double a, double b) { return 1.0 + 2.0 * a - b + 0.5 * a * b; };
  for (int i = 0; i < v.size(); ++i) {
    const auto x = v.Point(i);
    v.table(0)[i] = f(x[0], x[1]);
  }
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ua(-1.0, 1.0), ub(0.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const double a = ua(rng), b = ub(rng);
    EXPECT_NEAR(v.Interpolate(0, std::vector<double>{a, b}), f(a, b), 1e-12);
  }
  // Clamped outside the box.
  EXPECT_NEAR(v.Interpolate(0, std::vector<double>{3.0, -1.0}), f(1.0, 0.0), 1e-12);
  v.table(0)[0] = kInfeasibleValue;
  EXPECT_EQ(v.Interpolate(0, std::vector<double>{-0.9, 0.1}), kInfeasibleValue);
}

TEST(SolveDpTest, ZeroProblemIsZero) {
  const MultistageProblem p = BuildScalarTwoStage(true);
  const DpResult r = SolveDp(p, GridSpec::ForProblem(p, 21, 21));
  for (int t = 0; t <= 2; ++t) {
    EXPECT_EQ(r.infeasible_points[t], 0);
    for (double v : r.values.table(t)) EXPECT_EQ(v, 0.0);
  }
}

TEST(SolveDpTest, ScalarMatchesBruteForce) {
  const MultistageProblem p = BuildScalarTwoStage();
  const DpResult r = SolveDp(p, GridSpec::ForProblem(p, 21, 21));
  const auto oracle = BruteForceScalar(21);
  for (int t = 0; t <= 2; ++t) {
    for (int i = 0; i < 21; ++i) EXPECT_NEAR(r.values.table(t)[i], oracle[t][i], 1e-12);
  }
  // On the fine grid the value at x0 = 1 is the exact optimum.
  const DpResult fine = SolveDp(p, GridSpec::ForProblem(p, 2001, 2001));
  EXPECT_NEAR(fine.values.Interpolate(0, std::vector<double>{1.0}), 1.6, 1e-9);
}

TEST(SolveDpTest, NoEnumeratedControlImproves) {
  const MultistageProblem p =
      BuildSingleStorage(BoreholeParams::Single(), DemandProfile::Synthetic());
  const GridSpec g = GridSpec::Parse("9x11x11", p);
  const DpResult r = SolveDp(p, g);
  for (int t = 0; t < p.horizon(); ++t) {
    const StageModel& s = p.stages[t];
    for (int i = 0; i < r.values.size(); ++i) {
      const double stored = r.values.table(t)[i];
      std::vector<double> z = r.values.Point(i);
      z.resize(3);
      bool any = false;
      for (int a = 0; a < 11; ++a) {
        for (int b = 0; b < 11; ++b) {
          z[1] = g.control[0].At(a);
          z[2] = g.control[1].At(b);
          if (!s.feasible.Contains(z, 1e-9)) continue;
          const std::vector<double> next = {s.dynamics[0].Evaluate(z)};
          if (!p.state_sets[t + 1].Contains(next, 1e-9)) continue;
          const double v = r.values.Interpolate(t + 1, next);
          if (v >= kInfeasibleValue) continue;
          any = true;
          EXPECT_LE(stored, s.cost.Evaluate(z) + v + 1e-12);
        }
      }
      if (!any) EXPECT_EQ(stored, kInfeasibleValue);
    }
  }
}

TEST(SolveDpTest, SummerValueFunctionsHaveKinks) {
  const MultistageProblem p = SingleStorage();
  const DpResult r = SolveDp(p, GridSpec::Parse("41x1001x1001", p));
  for (int t = 0; t < 4; ++t) {
    const auto& v = r.values.table(t);
    double lo = 1e300, hi = -1e300;
    for (double x : v) {
      ASSERT_LT(x, kInfeasibleValue);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    // Second differences above grid noise, and at least one sign change.
    const double noise = 1e-6 * (hi - lo);
    int last = 0, changes = 0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      const double d2 = v[i - 1] - 2.0 * v[i] + v[i + 1];
      if (std::abs(d2) < noise) continue;
      const int sign = d2 > 0 ? 1 : -1;
      if (last != 0 && sign != last) ++changes;
      last = sign;
    }
    EXPECT_GE(changes, 1) << "stage " << t;
  }
}

TEST(SolveDpTest, RefusesMultiStorage) {
  const MultistageProblem p =
      BuildMultiStorage(BoreholeParams::Multi(), DemandProfile::Synthetic().Scaled(3.0));
  const GridSpec g = GridSpec::ForProblem(p);
  try {
    SolveDp(p, g);
    FAIL() << "expected DpRefused";
  } catch (const DpRefused& e) {
    EXPECT_NE(std::string(e.what()).find("memory requirements become excessive"),
              std::string::npos);
  }
}

TEST(SolveDpTest, RefusesMoreThanThreeStates) {
  MultistageProblem p = SingleStorage();
  GridSpec g = GridSpec::ForProblem(p, 3, 3);
  DpOptions o;
  o.evaluation_budget = 10.0;
  EXPECT_THROW(CheckDpTractable(p, g, o), DpRefused);
}

TEST(RolloutTest, GridPolicyReachesTableValueAtAlignedStart) {
  const MultistageProblem p = BuildScalarTwoStage();
  const GridSpec g = GridSpec::ForProblem(p, 21, 21);
  const DpResult r = SolveDp(p, g);
  for (double x0 : {-1.6, 0.0, 1.0, 2.0}) {
    const Trajectory tr = Rollout(p, r.values, std::vector<double>{x0}, g);
    EXPECT_NEAR(tr.total_cost, r.values.Interpolate(0, std::vector<double>{x0}), 1e-12) << x0;
    ASSERT_EQ(tr.states.size(), 3u);
    ASSERT_EQ(tr.stage_costs.size(), 2u);
  }
}

TEST(RolloutTest, ZeroDemandCostsNothing) {
  DemandProfile zero = DemandProfile::Synthetic().Scaled(0.0);
  const BoreholeParams params = BoreholeParams::Single();
  const MultistageProblem p = BuildSingleStorage(params, zero);
  const GridSpec g = GridSpec::Parse("41x101x101", p);
  const DpResult r = SolveDp(p, g);
  const Trajectory tr = Rollout(p, r.values, std::vector<double>{0.0}, g);
  EXPECT_EQ(tr.total_cost, 0.0);
  // Temperature follows the uncontrolled dynamics.
  double x = 6.0;
  for (int t = 0; t <= p.horizon(); ++t) {
    EXPECT_NEAR(p.state_scaling.ToPhysical(0, tr.states[t][0]), x, 1e-9);
    x += params.DynamicsGain() * params.conductivity[0] * (x - params.ambient);
  }
  // From 0 degC the drift leaves the box at once.
  try {
    Rollout(p, r.values, std::vector<double>{-1.0}, g);
    FAIL() << "expected RolloutError";
  } catch (const RolloutError& e) {
    EXPECT_EQ(e.stage(), 0);
  }
}

TEST(RolloutTest, CutStackPolicyOnScalarInstance) {
  const MultistageProblem p = BuildScalarTwoStage();
  ValueFunctionStack stack(p);
  // The exact V1 on [-2, 2] is 1.5 x^2.
  Polynomial x = Polynomial::Variable(1, 0);
  stack.AddCut(1, 1.5 * x * x);
  stack.AddCut(0, Polynomial::Constant(1, 0.0));
  const GridSpec g = GridSpec::ForProblem(p, 21, 2001);
  const Trajectory tr = Rollout(p, stack, std::vector<double>{1.0}, g);
  EXPECT_NEAR(tr.total_cost, 1.6, 1e-9);
}

TEST(GridCsvTest, RoundTrip) {
  const MultistageProblem p = SingleStorage();
  const GridSpec g = GridSpec::Parse("11x21x21", p);
  const DpResult r = SolveDp(p, g);
  const std::string path =
      (std::filesystem::temp_directory_path() / "mddp_grid_roundtrip.csv").string();
  WriteGridCsv(r.values, p, path);
  const GridValueFunction back = ReadGridCsv(path, p, g);
  for (int t = 0; t <= p.horizon(); ++t) {
    for (int i = 0; i < r.values.size(); ++i) {
      const double a = r.values.table(t)[i], b = back.table(t)[i];
      if (a >= kInfeasibleValue) {
        EXPECT_EQ(b, kInfeasibleValue);
      } else {
        EXPECT_NEAR(b, a, 1e-12 * std::max(1.0, std::abs(a)));
      }
    }
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace mddp

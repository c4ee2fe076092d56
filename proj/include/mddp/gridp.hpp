#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mddp/ddp.hpp"
#include "mddp/relax.hpp"

namespace mddp {

/// Stand-in for +infinity in value tables. Any interpolation that touches it
/// returns it unchanged.
inline constexpr double kInfeasibleValue = 1e12;

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  int points = 2;

  double step() const { return (hi - lo) / (points - 1); }
  double At(int i) const { return i == points - 1 ? hi : lo + i * step(); }
};

struct GridSpec {
  std::vector<GridAxis> state;
  std::vector<GridAxis> control;

  /// Axes spanning the problem's state and control boxes.
  static GridSpec ForProblem(const MultistageProblem& problem, int state_points = 41,
                             int control_points = 1001);
  /// "41x1001x1001": state counts first, then control counts. A single number
  /// per group is broadcast, so "41x1001" also works.
  static GridSpec Parse(const std::string& text, const MultistageProblem& problem);

  /// Throws std::invalid_argument on fewer than two points per axis or ranges
  /// that differ from the problem's boxes.
  void Validate(const MultistageProblem& problem) const;
  double StatePoints() const;
  double ControlPoints() const;
  std::string ToString() const;
};

/// Per-stage tables V_0..V_T over the state grid, multilinear in between.
class GridValueFunction {
 public:
  GridValueFunction() = default;
  GridValueFunction(std::vector<GridAxis> axes, int horizon);

  int horizon() const { return static_cast<int>(tables_.size()) - 1; }
  const std::vector<GridAxis>& axes() const { return axes_; }
  /// Grid points per stage.
  int size() const { return size_; }
  std::vector<double> Point(int index) const;

  std::vector<double>& table(int t) { return tables_.at(t); }
  const std::vector<double>& table(int t) const { return tables_.at(t); }

  /// Multilinear interpolation; queries outside the box are clamped.
  double Interpolate(int t, std::span<const double> x) const;

 private:
  std::vector<GridAxis> axes_;
  std::vector<int> strides_;
  int size_ = 0;
  std::vector<std::vector<double>> tables_;
};

struct DpOptions {
  /// Largest T * (state points) * (control points) accepted.
  double evaluation_budget = 2e10;
  /// Slack on g(x, u) >= 0 in problem units.
  double constraint_tolerance = 1e-9;
};

/// The grid is out of reach for exhaustive dynamic programming.
class DpRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws DpRefused for more than three states or a grid above the budget.
void CheckDpTractable(const MultistageProblem& problem, const GridSpec& grid,
                      const DpOptions& options = {});

struct DpResult {
  GridValueFunction values;
  /// Grid points per stage with no feasible control.
  std::vector<int> infeasible_points;
};

/// Backward induction over the grid: V_T = H, then
/// V_t(x) = min over the control grid of l(x, u) + V_{t+1}(f(x, u)) subject to
/// (x, u) in C_t and f(x, u) in X_{t+1}.
DpResult SolveDp(const MultistageProblem& problem, const GridSpec& grid,
                 const DpOptions& options = {});

struct Trajectory {
  std::vector<std::vector<double>> states;    // x_0 .. x_T
  std::vector<std::vector<double>> controls;  // u_0 .. u_{T-1}
  std::vector<double> stage_costs;
  double total_cost = 0.0;  // stage costs plus terminal cost
};

/// No control on the grid is feasible from the current state.
class RolloutError : public std::runtime_error {
 public:
  RolloutError(int stage, const std::string& what);
  int stage() const { return stage_; }

 private:
  int stage_;
};

/// Greedy policy: at each stage minimize l(x, u) + V_{t+1}(f(x, u)) over the
/// control grid of `grid`, with V from the table or the cut stack.
Trajectory Rollout(const MultistageProblem& problem, const GridValueFunction& values,
                   std::span<const double> x0, const GridSpec& grid,
                   const DpOptions& options = {});
Trajectory Rollout(const MultistageProblem& problem, const ValueFunctionStack& stack,
                   std::span<const double> x0, const GridSpec& grid,
                   const DpOptions& options = {});

/// `stage,<state names>,value` in physical units; +inf for infeasible points.
void WriteGridCsv(const GridValueFunction& values, const MultistageProblem& problem,
                  const std::string& path);
/// Inverse of WriteGridCsv for the given grid.
GridValueFunction ReadGridCsv(const std::string& path, const MultistageProblem& problem,
                              const GridSpec& grid);

}  // namespace mddp

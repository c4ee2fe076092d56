#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mddp/conic.hpp"
#include "mddp/poly.hpp"

namespace mddp {

/// { z : g_j(z) >= 0 for all j }. `box` is the smallest axis-aligned box
/// containing the set; it drives ball radii, interval bounds and rejection
/// sampling.
struct SemialgebraicSet {
  int nvars = 0;
  std::vector<Polynomial> inequalities;
  std::vector<Interval> box;
  std::optional<double> ball_radius;
  /// Position of the ball polynomial in `inequalities`, or -1.
  int ball_index = -1;

  /// Linear constraints z_i - lo_i >= 0 and hi_i - z_i >= 0.
  static SemialgebraicSet Box(std::span<const Interval> box);

  void AddInequality(Polynomial g);
  /// Appends 1 - sum z_i^2 / R^2 with R = factor * (box diagonal from the origin).
  void AddBallConstraint(double factor = 1.1);
  bool Contains(std::span<const double> point, double tolerance = 0.0) const;
};

struct StageModel {
  int nx = 0;
  int nu = 0;
  /// f_i(x, u) over nx + nu variables ordered (x, u).
  std::vector<Polynomial> dynamics;
  Polynomial cost;
  /// Feasible set C_t over (x, u).
  SemialgebraicSet feasible;

  /// Highest degree among the dynamics components (at least 1).
  int kappa() const;
};

struct InitialDistribution {
  enum class Kind { Dirac, UniformBox };
  Kind kind = Kind::Dirac;
  std::vector<double> point;
  std::vector<Interval> box;

  static InitialDistribution Dirac(std::vector<double> point);
  static InitialDistribution Uniform(std::vector<Interval> box);
};

/// Affine map between the solver's variables and physical units:
/// physical = scale * scaled + shift.
struct VariableScaling {
  std::vector<std::string> names;
  std::vector<double> scale;
  std::vector<double> shift;

  double ToPhysical(int i, double v) const { return scale[i] * v + shift[i]; }
  double ToScaled(int i, double v) const { return (v - shift[i]) / scale[i]; }
};

struct MultistageProblem {
  std::string name;
  std::vector<StageModel> stages;
  Polynomial terminal_cost;
  /// X_0 .. X_T over the state variables.
  std::vector<SemialgebraicSet> state_sets;
  InitialDistribution initial;

  VariableScaling state_scaling;
  VariableScaling control_scaling;
  /// Physical cost = cost_scale * scaled cost.
  double cost_scale = 1.0;

  int horizon() const { return static_cast<int>(stages.size()); }
  int nx() const { return stages.empty() ? 0 : stages.front().nx; }
  int nu() const { return stages.empty() ? 0 : stages.front().nu; }
};

enum class MomentSpace { StateAction, StateEpigraph, State };

/// Truncated moment sequence indexed by the graded monomial order.
struct MomentVector {
  MomentSpace space = MomentSpace::State;
  int nvars = 0;
  int order = 0;
  Eigen::VectorXd entries;
  /// Set when these are the moments of a point mass at `point`.
  std::vector<double> point;

  double mass() const { return entries.size() > 0 ? entries[0] : 0.0; }
  double operator()(const Monomial& m) const;
  /// L(p): Riesz functional applied to a polynomial of degree <= order.
  double Apply(const Polynomial& p) const;
  /// Moments of the first `n` variables (drops the remaining ones).
  MomentVector Marginal(int n, MomentSpace space) const;
};

/// Exact moments of a distribution up to `order`.
MomentVector MomentsOfDistribution(const InitialDistribution& dist, MomentSpace space,
                                   int order);

/// Symmetric-matrix-valued linear map entry(i,j) = sum_t coeff_t * m[index_t].
class MomentMatrixMap {
 public:
  struct Term {
    int i;
    int j;  // i >= j
    int moment;
    double coefficient;
  };

  int size() const { return size_; }
  const std::vector<Term>& terms() const { return terms_; }
  /// Basis monomials indexing rows and columns.
  const MonomialBasis& basis() const { return basis_; }
  Eigen::MatrixXd Evaluate(const Eigen::VectorXd& moments) const;

 private:
  friend MomentMatrixMap LocalizingMatrix(int, int, const Polynomial&, int);
  int size_ = 0;
  MonomialBasis basis_;
  std::vector<Term> terms_;
};

/// M_k(m) for a moment vector of `nvars` variables and order >= 2k.
MomentMatrixMap MomentMatrix(int nvars, int moment_order, int k);
/// M_{k - d_g}(g m), d_g = ceil(deg g / 2).
MomentMatrixMap LocalizingMatrix(int nvars, int moment_order, const Polynomial& g, int k);

/// Epigraph set over (x, y): x in X, y <= ybar, y >= cut_i(x); or, when
/// `terminal` is set, the terminal cost over X alone.
struct EpigraphSet {
  SemialgebraicSet state_set;
  double y_bar = 0.0;
  std::vector<Polynomial> cuts;
  bool terminal = false;

  static EpigraphSet Terminal(SemialgebraicSet state_set, Polynomial terminal_cost);
  static EpigraphSet Cuts(SemialgebraicSet state_set, double y_bar, Polynomial first_cut);

  void AddCut(Polynomial cut);
  /// max_i cut_i(x).
  double Evaluate(std::span<const double> x) const;
  /// Constraints of the set over (x, y), including the ball constraint.
  SemialgebraicSet LiftedSet() const;
};

struct RelaxationOptions {
  /// Relaxation order 2k (even).
  int order = 2;
  /// V restricted to degree <= 1 even if the degree cap allows more.
  bool affine_restricted = false;
};

/// Degree of the value polynomial V: floor(2k / kappa), capped at 1 under the
/// affine restriction.
int ValueDegree(const StageModel& stage, const RelaxationOptions& options);

/// Sum over stages of the box bound of |l_t|, plus that of |H|, doubled.
/// Returns one bound per t = 0..T.
std::vector<double> EpigraphBounds(const MultistageProblem& problem);

/// One stage program. The ConicProgram carries the SOS certificate as its
/// primal side and the moment relaxation as its dual side.
struct StageProgram {
  ConicProgram program;

  int nx = 0;
  int nu = 0;
  int order = 0;
  bool terminal = false;
  MonomialBasis m_basis;  // (x, u), or u alone when pinned; degree <= 2k
  MonomialBasis q_basis;  // (x, y) or x, degree <= 2k
  MonomialBasis v_basis;  // x, degree <= d
  MonomialBasis d_basis;  // x, degree <= d - 1
  int m_row = 0;          // first equality row of m
  int q_row = 0;          // first equality row of q_next
  int v_column = 0;       // first coordinate of the V coefficients (negated)
  int d_column = 0;       // first coordinate of the D coefficients (negated)
  /// Non-empty when q_in is a point mass. The state is then substituted by
  /// this point on the (x, u) side, m is carried over u only and D reduces to
  /// a constant. Removes the face of the moment cone the point mass pins.
  std::vector<double> pinned_state;

  struct Certificate {
    int block = 0;
    bool on_state_action = true;  // (x, u) side, otherwise (x, y) / x side
    Polynomial multiplier;        // g_j, constant 1 for the SOS term
    MonomialBasis basis;
  };
  std::vector<Certificate> certificates;

  // Problem data kept for reconstruction.
  Polynomial cost;
  std::vector<Polynomial> dynamics;
  Polynomial terminal_cost;  // terminal stage only
  MomentVector q_in;
};

/// Forward moment relaxation at one stage.
StageProgram BuildForwardSdp(const StageModel& stage, const MomentVector& q_in,
                             const EpigraphSet& epi_next, const RelaxationOptions& options);

/// Backward SOS program at one stage, assembled by polynomial coefficient
/// matching. Produces the same program as BuildForwardSdp.
StageProgram BuildBackwardSos(const StageModel& stage, const MomentVector& q_obj,
                              const EpigraphSet& epi_next, const RelaxationOptions& options);

struct ForwardResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = 0.0;  // rho
  double stage_cost = 0.0;  // L_m(l)
  MomentVector m;
  MomentVector q_next;      // (x, y) moments, or x moments at the terminal stage
  MomentVector next_state;  // x marginal of q_next
};

ForwardResult ExtractForward(const StageProgram& sp, const ConicSolution& solution);

struct BackwardResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = 0.0;  // theta = <W, q>
  Polynomial cut;      // W = V + D
  Polynomial value_next;  // V
  Polynomial offset;      // D
};

BackwardResult ExtractBackward(const StageProgram& sp, const ConicSolution& solution);

/// Largest coefficient mismatch between both sides of the Putinar identities
/// reconstructed from the solved Gram matrices.
double CertificateResidual(const StageProgram& sp, const ConicSolution& solution);

/// Joint relaxation over (m_0, q_1, m_1, q_2) of a two-stage problem.
struct UndecomposedProgram {
  ConicProgram program;
  /// Optimal value is -(dual objective).
  double ValueOf(const ConicSolution& solution) const { return -solution.dual_objective; }
};

UndecomposedProgram BuildUndecomposedSdp(const MultistageProblem& problem,
                                         const RelaxationOptions& options);

}  // namespace mddp

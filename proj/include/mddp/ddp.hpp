#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mddp/conic.hpp"
#include "mddp/poly.hpp"
#include "mddp/relax.hpp"

namespace mddp {

/// Epigraph sets Y_1..Y_T and the cut lists of stages 0..T-1. Cuts of stage
/// t >= 1 live inside epigraph(t); the stage-0 cuts are kept on their own
/// since nothing consumes them except the lower bound.
class ValueFunctionStack {
 public:
  ValueFunctionStack() = default;
  explicit ValueFunctionStack(const MultistageProblem& problem);

  int horizon() const { return static_cast<int>(cuts_.size()); }
  /// Y_t for t = 1..T.
  const EpigraphSet& epigraph(int t) const { return epigraphs_.at(t - 1); }
  /// Cuts of stage t = 0..T-1, oldest first.
  const std::vector<Polynomial>& cuts(int t) const { return cuts_.at(t); }

  void AddCut(int t, Polynomial cut);
  /// max_i cut_i(x) for t < T, H(x) for t = T.
  double Evaluate(int t, std::span<const double> x) const;

 private:
  std::vector<EpigraphSet> epigraphs_;
  std::vector<std::vector<Polynomial>> cuts_;
  Polynomial terminal_cost_;
};

struct DdpOptions {
  RelaxationOptions relaxation;
  double epsilon = 1e-4;
  int max_iterations = 200;
  SolverSettings solver;
  /// Objective moments of the initial backward pass, one per stage t = 0..T-1.
  /// Empty: uniform over each X_t box.
  std::vector<MomentVector> initial_moments;
  bool verbose = false;
};

/// A stage solve that stayed non-Optimal after the relaxed retry.
class DdpFailure : public std::runtime_error {
 public:
  DdpFailure(std::string pass, int stage, SolveStatus status, const std::string& detail);

  const std::string& pass() const { return pass_; }
  int stage() const { return stage_; }
  SolveStatus status() const { return status_; }

 private:
  std::string pass_;
  int stage_;
  SolveStatus status_;
};

struct ForwardPass {
  std::vector<double> rho;          // per stage
  std::vector<double> stage_costs;  // L_m(l_t)
  std::vector<MomentVector> state_moments;  // q_0 .. q_T over x
  /// (x, y) moments of q_t for t = 1..T-1 (index t - 1).
  std::vector<MomentVector> epigraph_moments;
  std::vector<MomentVector> stage_moments;  // m_t over (x, u)
  std::vector<SolveStatus> statuses;
  double rho_ub = 0.0;
};

struct BackwardPass {
  std::vector<double> theta;  // per stage
  std::vector<Polynomial> cuts;
  std::vector<SolveStatus> statuses;
  /// CertificateResidual of each cut.
  std::vector<double> certificate_residuals;
  double theta_lb = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<double> rho;
  double rho_ub = 0.0;
  std::vector<double> theta;
  double theta_lb = 0.0;
  std::vector<double> stage_costs;
  std::vector<MomentVector> state_moments;
  std::vector<MomentVector> epigraph_moments;
  std::vector<SolveStatus> forward_statuses;
  std::vector<SolveStatus> backward_statuses;
  /// L_q(y) - <W_t, q> for t = 1..T-1 (index t - 1), evaluated on the forward
  /// moments of this iteration against the cut the backward pass just added.
  std::vector<double> invalidation;
  std::vector<double> certificate_residuals;
  double seconds = 0.0;
};

struct DdpResult {
  ValueFunctionStack stack;
  /// Certificate residuals of the initial backward cuts, per stage.
  std::vector<double> initial_certificate_residuals;
  std::vector<IterationRecord> history;
  bool converged = false;

  double gap() const {
    return history.empty() ? 0.0 : history.back().rho_ub - history.back().theta_lb;
  }
};

/// Solves `program`; on a non-Optimal status retries once with tolerances
/// ten times looser.
ConicSolution SolveWithRetry(const ConicProgram& program, const SolverSettings& settings);

/// Default objective moments for the initial backward pass.
std::vector<MomentVector> UniformStageMoments(const MultistageProblem& problem, int order);

ValueFunctionStack InitialBackward(const MultistageProblem& problem, const DdpOptions& options,
                                   std::vector<double>* certificate_residuals = nullptr);

ForwardPass ForwardSimulation(const MultistageProblem& problem, const ValueFunctionStack& stack,
                              const DdpOptions& options);

/// Appends one cut per stage, t = T-1 down to 0, each built against the
/// epigraph that already holds this sweep's cut of stage t+1.
BackwardPass BackwardRecursion(const MultistageProblem& problem, ValueFunctionStack& stack,
                               const ForwardPass& forward, const DdpOptions& options);

DdpResult RunDdp(const MultistageProblem& problem, const DdpOptions& options);

struct DualPairReport {
  SolveStatus forward_status = SolveStatus::NumericalFailure;
  SolveStatus backward_status = SolveStatus::NumericalFailure;
  double rho = 0.0;
  double theta = 0.0;
  double gap = 0.0;
};

DualPairReport DualPairCheck(const StageModel& stage, const MomentVector& q,
                             const EpigraphSet& epi, const RelaxationOptions& options,
                             const SolverSettings& settings = {});

}  // namespace mddp

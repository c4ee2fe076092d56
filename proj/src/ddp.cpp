#include "mddp/ddp.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace mddp {

namespace {

void Expect(const ConicSolution& sol, const char* pass, int stage) {
  if (sol.status == SolveStatus::Optimal) return;
  std::ostringstream os;
  os << "iterations " << sol.iterations << ", primal residual " << sol.primal_residual
     << ", dual residual " << sol.dual_residual << ", relative gap " << sol.relative_gap;
  throw DdpFailure(pass, stage, sol.status, os.str());
}

Polynomial EmbedState(const Polynomial& p, int nvars) {
  std::vector<int> map(p.nvars());
  for (int i = 0; i < p.nvars(); ++i) map[i] = i;
  return Embed(p, nvars, map);
}

}  // namespace

DdpFailure::DdpFailure(std::string pass, int stage, SolveStatus status, const std::string& detail)
    : std::runtime_error(pass + " pass, stage " + std::to_string(stage) + ": " +
                         ToString(status) + " (" + detail + ")"),
      pass_(std::move(pass)),
      stage_(stage),
      status_(status) {}

ValueFunctionStack::ValueFunctionStack(const MultistageProblem& problem) {
  const int T = problem.horizon();
  if (T < 1) throw std::invalid_argument("problem has no stages");
  if (static_cast<int>(problem.state_sets.size()) != T + 1) {
    throw std::invalid_argument("need one state set per t = 0..T");
  }
  const std::vector<double> ybar = EpigraphBounds(problem);
  for (int t = 1; t < T; ++t) {
    EpigraphSet epi;
    epi.state_set = problem.state_sets[t];
    epi.y_bar = ybar[t];
    epigraphs_.push_back(std::move(epi));
  }
  epigraphs_.push_back(EpigraphSet::Terminal(problem.state_sets[T], problem.terminal_cost));
  cuts_.assign(T, {});
  terminal_cost_ = problem.terminal_cost;
}

void ValueFunctionStack::AddCut(int t, Polynomial cut) {
  if (t >= 1) epigraphs_.at(t - 1).AddCut(cut);
  cuts_.at(t).push_back(std::move(cut));
}

double ValueFunctionStack::Evaluate(int t, std::span<const double> x) const {
  if (t == horizon()) return terminal_cost_.Evaluate(x);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& cut : cuts_.at(t)) best = std::max(best, cut.Evaluate(x));
  return best;
}

ConicSolution SolveWithRetry(const ConicProgram& program, const SolverSettings& settings) {
  ConicSolution sol = Solve(program, settings);
  if (sol.status == SolveStatus::Optimal) return sol;
  SolverSettings loose = settings;
  loose.gap_tolerance *= 10.0;
  loose.feasibility_tolerance *= 10.0;
  return Solve(program, loose);
}

std::vector<MomentVector> UniformStageMoments(const MultistageProblem& problem, int order) {
  std::vector<MomentVector> out;
  for (int t = 0; t < problem.horizon(); ++t) {
    out.push_back(MomentsOfDistribution(InitialDistribution::Uniform(problem.state_sets[t].box),
                                        MomentSpace::State, order));
  }
  return out;
}

ValueFunctionStack InitialBackward(const MultistageProblem& problem, const DdpOptions& options,
                                   std::vector<double>* certificate_residuals) {
  ValueFunctionStack stack(problem);
  const int T = problem.horizon();
  const std::vector<MomentVector> q = options.initial_moments.empty()
                                          ? UniformStageMoments(problem, options.relaxation.order)
                                          : options.initial_moments;
  if (static_cast<int>(q.size()) != T) throw std::invalid_argument("need one q per stage");
  if (certificate_residuals) certificate_residuals->assign(T, 0.0);
  for (int t = T - 1; t >= 0; --t) {
    const StageProgram sp =
        BuildBackwardSos(problem.stages[t], q[t], stack.epigraph(t + 1), options.relaxation);
    const ConicSolution sol = SolveWithRetry(sp.program, options.solver);
    Expect(sol, "initial backward", t);
    if (certificate_residuals) (*certificate_residuals)[t] = CertificateResidual(sp, sol);
    stack.AddCut(t, ExtractBackward(sp, sol).cut);
  }
  return stack;
}

ForwardPass ForwardSimulation(const MultistageProblem& problem, const ValueFunctionStack& stack,
                              const DdpOptions& options) {
  const int T = problem.horizon();
  ForwardPass out;
  MomentVector q = MomentsOfDistribution(problem.initial, MomentSpace::State,
                                         options.relaxation.order);
  out.state_moments.push_back(q);
  for (int t = 0; t < T; ++t) {
    const StageProgram sp =
        BuildForwardSdp(problem.stages[t], q, stack.epigraph(t + 1), options.relaxation);
    const ConicSolution sol = SolveWithRetry(sp.program, options.solver);
    Expect(sol, "forward", t);
    ForwardResult fr = ExtractForward(sp, sol);
    out.rho.push_back(fr.value);
    out.stage_costs.push_back(fr.stage_cost);
    out.statuses.push_back(sol.status);
    out.stage_moments.push_back(fr.m);
    if (t + 1 < T) out.epigraph_moments.push_back(fr.q_next);
    q = fr.next_state;
    out.state_moments.push_back(q);
  }
  out.rho_ub = 0.0;
  for (double c : out.stage_costs) out.rho_ub += c;
  out.rho_ub += out.state_moments.back().Apply(problem.terminal_cost);
  return out;
}

BackwardPass BackwardRecursion(const MultistageProblem& problem, ValueFunctionStack& stack,
                               const ForwardPass& forward, const DdpOptions& options) {
  const int T = problem.horizon();
  BackwardPass out;
  out.theta.assign(T, 0.0);
  out.cuts.assign(T, Polynomial());
  out.statuses.assign(T, SolveStatus::NumericalFailure);
  out.certificate_residuals.assign(T, 0.0);
  for (int t = T - 1; t >= 0; --t) {
    const StageProgram sp = BuildBackwardSos(problem.stages[t], forward.state_moments[t],
                                             stack.epigraph(t + 1), options.relaxation);
    const ConicSolution sol = SolveWithRetry(sp.program, options.solver);
    Expect(sol, "backward", t);
    BackwardResult br = ExtractBackward(sp, sol);
    out.theta[t] = br.value;
    out.statuses[t] = sol.status;
    out.cuts[t] = br.cut;
    out.certificate_residuals[t] = CertificateResidual(sp, sol);
    stack.AddCut(t, std::move(br.cut));
  }
  out.theta_lb = out.theta[0];
  return out;
}

DdpResult RunDdp(const MultistageProblem& problem, const DdpOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const int T = problem.horizon();
  DdpResult result;
  result.stack = InitialBackward(problem, options, &result.initial_certificate_residuals);
  for (int z = 1; z <= options.max_iterations; ++z) {
    const auto start = std::chrono::steady_clock::now();
    const ForwardPass fwd = ForwardSimulation(problem, result.stack, options);
    const BackwardPass bwd = BackwardRecursion(problem, result.stack, fwd, options);

    IterationRecord rec;
    rec.iteration = z;
    rec.rho = fwd.rho;
    rec.rho_ub = fwd.rho_ub;
    rec.theta = bwd.theta;
    rec.theta_lb = bwd.theta_lb;
    rec.stage_costs = fwd.stage_costs;
    rec.state_moments = fwd.state_moments;
    rec.epigraph_moments = fwd.epigraph_moments;
    rec.forward_statuses = fwd.statuses;
    rec.backward_statuses = bwd.statuses;
    rec.certificate_residuals = bwd.certificate_residuals;
    for (int t = 1; t < T; ++t) {
      const MomentVector& qh = fwd.epigraph_moments[t - 1];
      const int nq = qh.nvars;
      rec.invalidation.push_back(qh.Apply(Polynomial::Variable(nq, nq - 1)) -
                                 qh.Apply(EmbedState(bwd.cuts[t], nq)));
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.verbose) {
      std::cerr << "iteration " << z << "  ub " << rec.rho_ub << "  lb " << rec.theta_lb
                << "  gap " << rec.rho_ub - rec.theta_lb << "  (" << rec.seconds << " s)\n";
    }
    const bool done = rec.rho_ub - rec.theta_lb < options.epsilon;
    result.history.push_back(std::move(rec));
    if (done) {
      result.converged = true;
      break;
    }
  }
  return result;
}

DualPairReport DualPairCheck(const StageModel& stage, const MomentVector& q,
                             const EpigraphSet& epi, const RelaxationOptions& options,
                             const SolverSettings& settings) {
  DualPairReport report;
  const StageProgram fwd = BuildForwardSdp(stage, q, epi, options);
  const ConicSolution fsol = Solve(fwd.program, settings);
  report.forward_status = fsol.status;
  report.rho = ExtractForward(fwd, fsol).value;
  const StageProgram bwd = BuildBackwardSos(stage, q, epi, options);
  const ConicSolution bsol = Solve(bwd.program, settings);
  report.backward_status = bsol.status;
  report.theta = ExtractBackward(bwd, bsol).value;
  report.gap = std::abs(report.rho - report.theta);
  return report;
}

}  // namespace mddp

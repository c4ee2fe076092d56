// Command-line driver: solve, dp, rollout, compare.
//
// Exit codes: 0 success (converged), 1 error, 2 not converged.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mddp/artifacts.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mddp {
namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kNotConverged = 2;

struct SolveArgs {
  std::string config;
  int order = 0;
  std::string variant;
  double epsilon = 0.0;
  int max_iters = 0;
  std::string out = "out";
  bool verbose = false;
};

struct DpArgs {
  std::string config;
  std::string grid;
  std::string out = "out";
};

struct RolloutArgs {
  std::string config;
  std::string cuts;
  std::string dp;
  std::string x0;
  std::string grid;
  std::string out = "rollout.csv";
};

struct CompareArgs {
  std::string cuts;
  std::string dp;
  std::string out = "out";
  double delta = 0.01;
};

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    out.push_back(std::stod(cell, &used));
    if (used != cell.size()) throw std::invalid_argument("bad number '" + cell + "'");
  }
  return out;
}

void PrintWarnings(const std::vector<BuildWarning>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: stage " << w.stage << ": " << w.message << "\n";
}

int Solve(const SolveArgs& args) {
  CaseConfig config = CaseConfig::Load(args.config);
  if (!args.variant.empty()) {
    config.variant = args.variant;
    config.order = VariantOptions(args.variant).order;
  }
  if (args.order > 0) {
    if (args.order % 2 != 0) throw std::invalid_argument("--order must be even");
    config.order = args.order;
  }
  if (args.epsilon > 0.0) config.epsilon = args.epsilon;
  if (args.max_iters > 0) config.max_iterations = args.max_iters;

  std::vector<BuildWarning> warnings;
  const MultistageProblem problem = config.Build(&warnings);
  PrintWarnings(warnings);
  DdpOptions options = OptionsFor(config);
  options.verbose = args.verbose;

  const auto start = std::chrono::steady_clock::now();
  const DdpResult result = RunDdp(problem, options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(args.out);
  const std::string bounds = (fs::path(args.out) / "bounds.csv").string();
  const std::string cuts = (fs::path(args.out) / "cuts.json").string();
  const std::string manifest = (fs::path(args.out) / "manifest.json").string();
  WriteBoundsCsv(result, bounds);
  WriteCutsJson(MakeCutArtifact(config, problem, options, result), cuts);

  json m;
  m["config"] = json::parse(config.ToJson());
  m["fingerprint"] = Fingerprint(config);
  m["variant"] = config.variant;
  m["order"] = config.order;
  m["affine_restricted"] = options.relaxation.affine_restricted;
  m["epsilon"] = config.epsilon;
  m["max_iterations"] = config.max_iterations;
  m["converged"] = result.converged;
  m["iterations"] = result.history.size();
  m["cost_scale"] = problem.cost_scale;
  if (!result.history.empty()) {
    const IterationRecord& last = result.history.back();
    m["rho_ub"] = last.rho_ub;
    m["theta_lb"] = last.theta_lb;
    m["gap"] = last.rho_ub - last.theta_lb;
  }
  double worst = 0.0;
  for (double r : result.initial_certificate_residuals) worst = std::max(worst, r);
  for (const auto& rec : result.history) {
    for (double r : rec.certificate_residuals) worst = std::max(worst, r);
  }
  m["max_certificate_residual"] = worst;
  json w = json::array();
  for (const auto& x : warnings) w.push_back({{"stage", x.stage}, {"message", x.message}});
  m["warnings"] = w;
  m["outputs"] = {{"bounds", "bounds.csv"}, {"cuts", "cuts.json"}};
  std::ofstream(manifest) << m.dump(2) << "\n";

  std::printf("%s %s: %s after %zu iterations, ub %.10g lb %.10g (%.2f s)\n",
              problem.name.c_str(), config.variant.c_str(),
              result.converged ? "converged" : "not converged", result.history.size(),
              result.history.empty() ? 0.0 : result.history.back().rho_ub,
              result.history.empty() ? 0.0 : result.history.back().theta_lb, seconds);
  return result.converged ? kOk : kNotConverged;
}

int Dp(const DpArgs& args) {
  DpArtifact a;
  a.config = CaseConfig::Load(args.config);
  a.fingerprint = Fingerprint(a.config);
  std::vector<BuildWarning> warnings;
  a.problem = a.config.Build(&warnings);
  PrintWarnings(warnings);
  a.grid = args.grid.empty() ? GridSpec::ForProblem(a.problem)
                             : GridSpec::Parse(args.grid, a.problem);
  const auto start = std::chrono::steady_clock::now();
  DpResult r = SolveDp(a.problem, a.grid);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  a.values = std::move(r.values);
  a.infeasible_points = r.infeasible_points;
  fs::create_directories(args.out);
  const std::string csv = (fs::path(args.out) / "dp.csv").string();
  WriteDpArtifact(a, csv);
  for (int t = 0; t < static_cast<int>(a.infeasible_points.size()); ++t) {
    if (a.infeasible_points[t] > 0) {
      std::cerr << "stage " << t << ": " << a.infeasible_points[t]
                << " grid states without a feasible control\n";
    }
  }
  std::printf("grid %s: %d stage tables written to %s (%.2f s)\n", a.grid.ToString().c_str(),
              a.values.horizon() + 1, csv.c_str(), seconds);
  return kOk;
}

int Rollout(const RolloutArgs& args) {
  const CaseConfig config = CaseConfig::Load(args.config);
  const std::string fingerprint = Fingerprint(config);
  const MultistageProblem problem = config.Build();
  const int nx = problem.nx(), T = problem.horizon();

  const std::vector<double> flat = ParseList(args.x0);
  if (flat.empty() || flat.size() % nx != 0) {
    throw std::invalid_argument("--x0 needs a multiple of " + std::to_string(nx) + " values");
  }
  std::string grid_text = args.grid;
  if (grid_text.empty()) grid_text = "41x1001";

  CutArtifact cuts;
  DpArtifact dp;
  if (!args.cuts.empty()) {
    cuts = ReadCutsJson(args.cuts);
    if (cuts.fingerprint != fingerprint) throw std::invalid_argument("cut file is for another config");
  } else {
    dp = ReadDpArtifact(args.dp);
    if (dp.fingerprint != fingerprint) throw std::invalid_argument("DP table is for another config");
  }
  const GridSpec grid = GridSpec::Parse(grid_text, problem);

  std::ofstream out(args.out);
  if (!out) throw std::runtime_error("cannot write " + args.out);
  out.precision(12);
  out << "x0,total_cost";
  for (int t = 0; t < T; ++t) out << ",stage_" << t;
  out << "\n";
  for (std::size_t k = 0; k < flat.size(); k += nx) {
    std::vector<double> x0(nx);
    std::string label;
    for (int i = 0; i < nx; ++i) {
      x0[i] = problem.state_scaling.ToScaled(i, flat[k + i]);
      std::ostringstream os;
      os << flat[k + i];
      label += (i ? ";" : "") + os.str();
    }
    const Trajectory tr = args.cuts.empty() ? mddp::Rollout(problem, dp.values, x0, grid)
                                            : mddp::Rollout(problem, cuts.stack, x0, grid);
    out << label << "," << tr.total_cost * problem.cost_scale;
    for (double c : tr.stage_costs) out << "," << c * problem.cost_scale;
    out << "\n";
    std::printf("x0 %s: total cost %.6f\n", label.c_str(), tr.total_cost * problem.cost_scale);
  }
  return kOk;
}

int Compare(const CompareArgs& args) {
  const CutArtifact cuts = ReadCutsJson(args.cuts);
  const DpArtifact dp = ReadDpArtifact(args.dp);
  const ComparisonReport report = CompareCutsToDp(cuts, dp);
  fs::create_directories(args.out);
  WriteComparisonCsv(report, cuts.problem, (fs::path(args.out) / "compare_points.csv").string(),
                     (fs::path(args.out) / "compare_summary.csv").string());
  int flagged = 0;
  for (const StageComparison& s : report.stages) {
    const bool bad = s.Violates(args.delta);
    flagged += bad;
    std::printf("stage %2d  range %.6g  max violation %.6g (%.3f%%)  tracking %.3f%%%s\n",
                s.stage, s.range(), s.max_violation, 100.0 * s.relative_violation(),
                100.0 * s.relative_tracking(), bad ? "  VIOLATION" : "");
  }
  std::printf("%d of %zu stages exceed the %.3g%% violation margin\n", flagged,
              report.stages.size(), 100.0 * args.delta);
  return kOk;
}

}  // namespace
}  // namespace mddp

int main(int argc, char** argv) {
  using namespace mddp;
  CLI::App app{"Moment DDP bounds, grid DP oracle and policy rollouts"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Run Moment DDP and write bounds, cuts and a manifest");
  s->add_option("config", solve.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  s->add_option("--order", solve.order, "Relaxation order 2k (overrides the variant)");
  s->add_option("--variant", solve.variant, "affine-2 | affine-restricted-4 | quadratic-4");
  s->add_option("--epsilon", solve.epsilon, "Gap tolerance");
  s->add_option("--max-iters", solve.max_iters, "Iteration limit");
  s->add_option("--out", solve.out, "Output directory");
  s->add_flag("--verbose", solve.verbose, "Print per-iteration bounds");

  DpArgs dp;
  auto* d = app.add_subcommand("dp", "Solve the grid DP and write per-stage value tables");
  d->add_option("config", dp.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  d->add_option("--grid", dp.grid, "Grid counts, e.g. 41x1001x1001");
  d->add_option("--out", dp.out, "Output directory");

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "Simulate the greedy policy of a cut file or DP table");
  r->add_option("config", ro.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* rc = r->add_option("--cuts", ro.cuts, "cuts.json from solve")->check(CLI::ExistingFile);
  auto* rd = r->add_option("--dp", ro.dp, "dp.csv from dp")->check(CLI::ExistingFile);
  rc->excludes(rd);
  r->add_option("--x0", ro.x0, "Initial states in physical units, comma separated")->required();
  r->add_option("--grid", ro.grid, "Grid counts; the control part sets the search grid");
  r->add_option("--out", ro.out, "Output CSV");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Compare cuts against the grid DP value functions");
  c->add_option("--cuts", cmp.cuts, "cuts.json from solve")->required()->check(CLI::ExistingFile);
  c->add_option("--dp", cmp.dp, "dp.csv from dp")->required()->check(CLI::ExistingFile);
  c->add_option("--out", cmp.out, "Output directory");
  c->add_option("--delta", cmp.delta, "Allowed violation as a fraction of each stage's range");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (*s) return Solve(solve);
    if (*d) return Dp(dp);
    if (*r) {
      if (ro.cuts.empty() && ro.dp.empty()) throw std::invalid_argument("need --cuts or --dp");
      return Rollout(ro);
    }
    if (*c) return Compare(cmp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}

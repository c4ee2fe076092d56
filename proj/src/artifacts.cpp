#include "mddp/artifacts.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace mddp {

namespace {

using json = nlohmann::json;

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void WriteJson(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

json ScalingJson(const VariableScaling& s) {
  return {{"names", s.names}, {"scale", s.scale}, {"shift", s.shift}};
}

double Relative(double value, double range, double noise) {
  if (range > noise) return value / range;
  return value > noise ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

std::string Fingerprint(const CaseConfig& config) {
  // Solver settings do not change the problem.
  json j = json::parse(config.ToJson());
  j.erase("relaxation");
  j.erase("tolerance");
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

DdpOptions OptionsFor(const CaseConfig& config) {
  DdpOptions o;
  o.relaxation = VariantOptions(config.variant);
  o.relaxation.order = config.order;
  o.epsilon = config.epsilon;
  o.max_iterations = config.max_iterations;
  return o;
}

std::vector<Interval> MassInterval(const MomentVector& q, std::span<const Interval> box) {
  std::vector<Interval> out;
  const double k = std::sqrt(10.0);
  const int n = static_cast<int>(box.size());
  for (int i = 0; i < n; ++i) {
    const Polynomial x = Polynomial::Variable(q.nvars, i);
    const double mean = q.Apply(x) / q.mass();
    const double second = q.Apply(x * x) / q.mass();
    const double sd = std::sqrt(std::max(0.0, second - mean * mean));
    out.push_back({std::clamp(mean - k * sd, box[i].lo, box[i].hi),
                   std::clamp(mean + k * sd, box[i].lo, box[i].hi)});
  }
  return out;
}

void WriteBoundsCsv(const DdpResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,rho_ub,theta_lb\n";
  out.precision(17);
  for (const IterationRecord& rec : result.history) {
    out << rec.iteration << "," << rec.rho_ub << "," << rec.theta_lb << "\n";
  }
}

// ------------------------------------------------------------------- cuts

CutArtifact MakeCutArtifact(const CaseConfig& config, const MultistageProblem& problem,
                            const DdpOptions& options, const DdpResult& result) {
  CutArtifact a;
  a.config = config;
  a.fingerprint = Fingerprint(config);
  a.relaxation = options.relaxation;
  a.problem = problem;
  a.stack = result.stack;
  if (!result.history.empty()) {
    const auto& moments = result.history.back().state_moments;
    for (int t = 0; t < problem.horizon(); ++t) {
      a.mass_intervals.push_back(MassInterval(moments[t], problem.state_sets[t].box));
    }
  }
  return a;
}

void WriteCutsJson(const CutArtifact& artifact, const std::string& path) {
  const MultistageProblem& p = artifact.problem;
  json j;
  j["fingerprint"] = artifact.fingerprint;
  j["config"] = json::parse(artifact.config.ToJson());
  j["relaxation"] = {{"order", artifact.relaxation.order},
                     {"affine_restricted", artifact.relaxation.affine_restricted}};
  j["scaling"] = {{"state", ScalingJson(p.state_scaling)},
                  {"control", ScalingJson(p.control_scaling)},
                  {"cost_scale", p.cost_scale}};
  j["coefficient_order"] = "graded, lower degree first; 1, x1, ..., xn, x1^2, x1 x2, ...";
  json stages = json::array();
  for (int t = 0; t < p.horizon(); ++t) {
    json cuts = json::array();
    for (const Polynomial& cut : artifact.stack.cuts(t)) {
      const int degree = std::max(0, cut.degree());
      const MonomialBasis basis(p.nx(), degree);
      cuts.push_back({{"degree", degree}, {"coefficients", cut.Coefficients(basis)}});
    }
    json stage = {{"stage", t}, {"cuts", cuts}};
    if (t < static_cast<int>(artifact.mass_intervals.size())) {
      json iv = json::array();
      for (const Interval& i : artifact.mass_intervals[t]) iv.push_back({i.lo, i.hi});
      stage["mass_interval"] = iv;
    }
    stages.push_back(stage);
  }
  j["stages"] = stages;
  WriteJson(j, path);
}

CutArtifact ReadCutsJson(const std::string& path) {
  const json j = ReadJson(path);
  CutArtifact a;
  try {
    a.config = CaseConfig::Parse(j.at("config").dump(), ".", path);
    a.fingerprint = j.at("fingerprint").get<std::string>();
    if (a.fingerprint != Fingerprint(a.config)) {
      throw std::runtime_error("fingerprint does not match the embedded config");
    }
    a.relaxation.order = j.at("relaxation").at("order").get<int>();
    a.relaxation.affine_restricted = j.at("relaxation").at("affine_restricted").get<bool>();
    a.problem = a.config.Build();
    a.stack = ValueFunctionStack(a.problem);
    const json& stages = j.at("stages");
    if (static_cast<int>(stages.size()) != a.problem.horizon()) {
      throw std::runtime_error("stage count does not match the horizon");
    }
    const int nx = a.problem.nx();
    for (const json& s : stages) {
      const int t = s.at("stage").get<int>();
      for (const json& c : s.at("cuts")) {
        const MonomialBasis basis(nx, c.at("degree").get<int>());
        const auto coeffs = c.at("coefficients").get<std::vector<double>>();
        if (coeffs.size() != basis.size()) throw std::runtime_error("wrong coefficient count");
        a.stack.AddCut(t, Polynomial::FromCoefficients(basis, coeffs));
      }
      if (s.contains("mass_interval")) {
        std::vector<Interval> iv;
        for (const json& i : s["mass_interval"]) iv.push_back({i.at(0), i.at(1)});
        a.mass_intervals.push_back(iv);
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return a;
}

// --------------------------------------------------------------------- dp

std::string DpMetaPath(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

void WriteDpArtifact(const DpArtifact& artifact, const std::string& csv_path) {
  WriteGridCsv(artifact.values, artifact.problem, csv_path);
  json j;
  j["fingerprint"] = artifact.fingerprint;
  j["config"] = json::parse(artifact.config.ToJson());
  j["grid"] = artifact.grid.ToString();
  j["infeasible_points"] = artifact.infeasible_points;
  j["cost_scale"] = artifact.problem.cost_scale;
  WriteJson(j, DpMetaPath(csv_path));
}

DpArtifact ReadDpArtifact(const std::string& csv_path) {
  const std::string meta = DpMetaPath(csv_path);
  const json j = ReadJson(meta);
  DpArtifact a;
  try {
    a.config = CaseConfig::Parse(j.at("config").dump(), ".", meta);
    a.fingerprint = j.at("fingerprint").get<std::string>();
    if (a.fingerprint != Fingerprint(a.config)) {
      throw std::runtime_error("fingerprint does not match the embedded config");
    }
    a.problem = a.config.Build();
    a.grid = GridSpec::Parse(j.at("grid").get<std::string>(), a.problem);
    a.infeasible_points = j.at("infeasible_points").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw std::runtime_error(meta + ": " + e.what());
  }
  a.values = ReadGridCsv(csv_path, a.problem, a.grid);
  return a;
}

// ---------------------------------------------------------------- compare

double StageComparison::relative_violation() const {
  return Relative(max_violation, range(), noise);
}
double StageComparison::relative_tracking() const {
  return Relative(tracking_error, range(), noise);
}

ComparisonReport CompareCutsToDp(const CutArtifact& cuts, const DpArtifact& dp) {
  if (cuts.fingerprint != dp.fingerprint) {
    throw std::invalid_argument("cut and DP artifacts come from different problems (" +
                                cuts.fingerprint + " vs " + dp.fingerprint + ")");
  }
  const MultistageProblem& p = cuts.problem;
  const int T = p.horizon();
  const double cs = p.cost_scale;
  const GridValueFunction& values = dp.values;
  const int nx = p.nx();
  auto physical = [&](std::vector<double> x) {
    for (int i = 0; i < nx; ++i) x[i] = p.state_scaling.ToPhysical(i, x[i]);
    return x;
  };
  auto inside = [](const std::vector<double>& x, const std::vector<Interval>& box) {
    for (std::size_t i = 0; i < box.size(); ++i) {
      if (x[i] < box[i].lo - 1e-12 || x[i] > box[i].hi + 1e-12) return false;
    }
    return true;
  };

  ComparisonReport report;
  for (int t = 0; t < T; ++t) {
    StageComparison s;
    s.stage = t;
    s.noise = 1e-6 * cs;
    s.dp_min = std::numeric_limits<double>::infinity();
    s.dp_max = -std::numeric_limits<double>::infinity();
    s.max_violation = -std::numeric_limits<double>::infinity();
    if (t < static_cast<int>(cuts.mass_intervals.size())) s.interval = cuts.mass_intervals[t];

    // A stage-0 cut built from a point law is only meaningful at that point.
    std::vector<std::vector<double>> xs;
    std::vector<double> dvals;
    if (t == 0 && p.initial.kind == InitialDistribution::Kind::Dirac) {
      xs.push_back(p.initial.point);
      dvals.push_back(values.Interpolate(0, p.initial.point));
    } else {
      for (int g = 0; g < values.size(); ++g) {
        xs.push_back(values.Point(g));
        dvals.push_back(values.table(t)[g]);
      }
    }
    for (std::size_t g = 0; g < xs.size(); ++g) {
      const double cut = cuts.stack.Evaluate(t, xs[g]);
      PointComparison pc{t, physical(xs[g]), cut * cs, dvals[g]};
      if (dvals[g] < kInfeasibleValue) {
        pc.dp = dvals[g] * cs;
        s.dp_min = std::min(s.dp_min, pc.dp);
        s.dp_max = std::max(s.dp_max, pc.dp);
        s.max_violation = std::max(s.max_violation, pc.cut - pc.dp);
        ++s.points_compared;
        if (s.interval.empty() || inside(xs[g], s.interval)) {
          s.tracking_error = std::max(s.tracking_error, std::abs(pc.cut - pc.dp));
          ++s.points_in_interval;
        }
      }
      report.points.push_back(std::move(pc));
    }
    if (s.points_compared == 0) {
      s.dp_min = s.dp_max = 0.0;
      s.max_violation = 0.0;
    }
    report.stages.push_back(std::move(s));
  }
  return report;
}

void WriteComparisonCsv(const ComparisonReport& report, const MultistageProblem& problem,
                        const std::string& points_path, const std::string& summary_path) {
  const int nx = problem.nx();
  {
    std::ofstream out(points_path);
    if (!out) throw std::runtime_error("cannot write " + points_path);
    out.precision(17);
    out << "stage";
    for (int i = 0; i < nx; ++i) out << "," << problem.state_scaling.names.at(i);
    out << ",cut_value,dp_value,violation\n";
    for (const PointComparison& pc : report.points) {
      out << pc.stage;
      for (double x : pc.x) out << "," << x;
      out << "," << pc.cut;
      if (pc.dp >= kInfeasibleValue) {
        out << ",inf,\n";
      } else {
        out << "," << pc.dp << "," << pc.cut - pc.dp << "\n";
      }
    }
  }
  std::ofstream out(summary_path);
  if (!out) throw std::runtime_error("cannot write " + summary_path);
  out.precision(10);
  out << "stage,dp_min,dp_max,max_violation,relative_violation,tracking_error,relative_tracking";
  for (int i = 0; i < nx; ++i) {
    const std::string& name = problem.state_scaling.names.at(i);
    out << ",interval_lo_" << name << ",interval_hi_" << name;
  }
  out << "\n";
  for (const StageComparison& s : report.stages) {
    out << s.stage << "," << s.dp_min << "," << s.dp_max << "," << s.max_violation << ","
        << s.relative_violation() << "," << s.tracking_error << "," << s.relative_tracking();
    for (int i = 0; i < nx; ++i) {
      if (s.interval.empty()) {
        out << ",,";
      } else {
        out << "," << problem.state_scaling.ToPhysical(i, s.interval[i].lo) << ","
            << problem.state_scaling.ToPhysical(i, s.interval[i].hi);
      }
    }
    out << "\n";
  }
}

}  // namespace mddp

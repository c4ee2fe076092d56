#include "mddp/casestudies.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include "json.hpp"

namespace mddp {

namespace {

using json = nlohmann::json;

Polynomial Var(int n, int i) { return Polynomial::Variable(n, i); }

// Largest absolute coefficient, used to normalize constraint rows.
double MaxCoefficient(const Polynomial& p) {
  double m = 0.0;
  for (const auto& [mono, c] : p.terms()) m = std::max(m, std::abs(c));
  return m;
}

SemialgebraicSet ScaleSet(const SemialgebraicSet& set, std::span<const double> scale,
                          std::span<const double> shift, bool with_ball) {
  SemialgebraicSet out;
  out.nvars = set.nvars;
  out.box.assign(set.nvars, Interval{-1.0, 1.0});
  for (int j = 0; j < static_cast<int>(set.inequalities.size()); ++j) {
    if (j == set.ball_index) continue;
    Polynomial g = AffineChangeOfVariables(set.inequalities[j], scale, shift);
    const double norm = MaxCoefficient(g);
    if (norm > 0.0) g *= 1.0 / norm;
    out.inequalities.push_back(std::move(g));
  }
  // Redundant 1 - z_i^2 >= 0. The linear box rows alone leave x^4 <= x^2 out
  // of the order-4 localizers.
  for (int i = 0; i < set.nvars; ++i) {
    const Polynomial z = Polynomial::Variable(set.nvars, i);
    out.inequalities.push_back(1.0 - z * z);
  }
  if (with_ball) out.AddBallConstraint();
  return out;
}

// Coarse search for a feasible control at a few states of each stage.
void CheckStageFeasibility(const MultistageProblem& p, std::vector<BuildWarning>* warnings) {
  if (!warnings) return;
  for (int t = 0; t < p.horizon(); ++t) {
    const StageModel& s = p.stages[t];
    const int nz = s.nx + s.nu;
    const int xpts = s.nx == 1 ? 21 : 3;
    const int upts = s.nu <= 2 ? 41 : 4;
    long nstates = 1, nctrl = 1;
    for (int i = 0; i < s.nx; ++i) nstates *= xpts;
    for (int j = 0; j < s.nu; ++j) nctrl *= upts;
    std::vector<double> z(nz);
    auto coord = [&](int var, int idx, int pts) {
      const Interval& iv = s.feasible.box[var];
      return iv.lo + (iv.hi - iv.lo) * idx / (pts - 1);
    };
    int bad = 0;
    for (long a = 0; a < nstates; ++a) {
      long r = a;
      for (int i = 0; i < s.nx; ++i, r /= xpts) z[i] = coord(i, static_cast<int>(r % xpts), xpts);
      bool ok = false;
      for (long b = 0; b < nctrl && !ok; ++b) {
        long q = b;
        for (int j = 0; j < s.nu; ++j, q /= upts) {
          z[s.nx + j] = coord(s.nx + j, static_cast<int>(q % upts), upts);
        }
        ok = s.feasible.Contains(z, 1e-9);
      }
      if (!ok) ++bad;
    }
    if (bad > 0) {
      warnings->push_back({t, std::to_string(bad) + " of " + std::to_string(nstates) +
                                  " sampled states have no feasible control"});
    }
  }
}

std::vector<double> ReadNumberArray(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}

double ParseNumber(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

}  // namespace

// ----------------------------------------------------------------- params

BoreholeParams BoreholeParams::Single() { return BoreholeParams(); }

BoreholeParams BoreholeParams::Multi() {
  BoreholeParams p;
  p.conductivity = {0.9 * 0.621, 0.621, 1.1 * 0.621};
  p.boiler_capacity = 855.0;
  p.chiller_capacity = 450.0;
  return p;
}

void BoreholeParams::Validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  positive(electricity_price, "electricity price");
  positive(gas_price, "gas price");
  positive(heat_pump_capacity, "heat pump capacity");
  positive(boiler_efficiency, "boiler efficiency");
  positive(boiler_capacity, "boiler capacity");
  positive(chiller_cop, "chiller COP");
  positive(chiller_capacity, "chiller capacity");
  positive(inertia, "inertia");
  positive(charge_capacity, "charge capacity");
  positive(step_hours, "step length");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least one stage");
  if (!(t_low < t_high)) throw std::invalid_argument("temperature range is empty");
  if (cop.size() != 2) throw std::invalid_argument("COP must be affine (two coefficients)");
  if (conductivity.empty()) throw std::invalid_argument("need at least one borehole");
  for (double l : conductivity) positive(l, "conductivity");
}

// ----------------------------------------------------------------- demand

DemandProfile DemandProfile::Synthetic() {
  DemandProfile d;
  // May .. April. Cooling dominates May to September.
  d.heat = {20, 10, 5, 5, 15, 40, 80, 120, 140, 120, 90, 50};
  d.cool = {60, 100, 130, 120, 70, 30, 10, 10, 10, 10, 10, 30};
  return d;
}

DemandProfile DemandProfile::Scaled(double factor) const {
  DemandProfile d = *this;
  for (double& v : d.heat) v *= factor;
  for (double& v : d.cool) v *= factor;
  return d;
}

void DemandProfile::Validate(int horizon) const {
  if (heat.size() != cool.size()) throw std::invalid_argument("heat and cooling rows differ");
  if (size() != horizon) {
    throw std::invalid_argument("demand has " + std::to_string(size()) + " stages, horizon is " +
                                std::to_string(horizon));
  }
  for (int t = 0; t < size(); ++t) {
    if (heat[t] < 0.0 || cool[t] < 0.0) {
      throw std::invalid_argument("negative demand at stage " + std::to_string(t));
    }
  }
}

DemandProfile LoadDemandCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demand file " + path);
  std::string line;
  if (!std::getline(in, line) || SplitCsvLine(line) != std::vector<std::string>{
                                                          "stage", "d_heat_kw", "d_cool_kw"}) {
    throw std::runtime_error(path + ":1: expected header stage,d_heat_kw,d_cool_kw");
  }
  DemandProfile d;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = SplitCsvLine(line);
    if (cells.size() != 3) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 3 columns");
    }
    const double stage = ParseNumber(cells[0], path, lineno);
    if (stage != d.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected stage " +
                               std::to_string(d.size()));
    }
    const double heat = ParseNumber(cells[1], path, lineno);
    const double cool = ParseNumber(cells[2], path, lineno);
    if (heat < 0.0 || cool < 0.0) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": negative demand");
    }
    d.heat.push_back(heat);
    d.cool.push_back(cool);
  }
  return d;
}

void WriteDemandCsv(const DemandProfile& demand, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "stage,d_heat_kw,d_cool_kw\n";
  for (int t = 0; t < demand.size(); ++t) {
    out << t << "," << demand.heat[t] << "," << demand.cool[t] << "\n";
  }
}

// -------------------------------------------------------------------- COP

Polynomial CopFit::AsPolynomial() const { return intercept + slope * Var(1, 0); }

CopFit FitCop(const std::vector<std::pair<double, double>>& samples) {
  const int n = static_cast<int>(samples.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = samples[i].first;
    y[i] = samples[i].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (n < 2 || qr.rank() < 2) {
    throw std::invalid_argument("COP fit needs samples at two or more distinct temperatures");
  }
  const Eigen::Vector2d beta = qr.solve(y);
  CopFit fit;
  fit.intercept = beta[0];
  fit.slope = beta[1];
  fit.residual_norm = (X * beta - y).norm();
  return fit;
}

std::vector<std::pair<double, double>> LoadCopCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open COP file " + path);
  std::string line;
  if (!std::getline(in, line) ||
      SplitCsvLine(line) != std::vector<std::string>{"temperature_c", "cop"}) {
    throw std::runtime_error(path + ":1: expected header temperature_c,cop");
  }
  std::vector<std::pair<double, double>> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = SplitCsvLine(line);
    if (cells.size() != 2) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 2 columns");
    }
    out.emplace_back(ParseNumber(cells[0], path, lineno), ParseNumber(cells[1], path, lineno));
  }
  return out;
}

// --------------------------------------------------------------- builders

MultistageProblem BuildStorageProblem(const BoreholeParams& params, const DemandProfile& demand,
                                      std::vector<BuildWarning>* warnings) {
  params.Validate();
  demand.Validate(params.horizon);
  const int nb = static_cast<int>(params.conductivity.size());
  const int nx = nb, nu = 2 * nb, nz = nx + nu;
  const double gain = params.DynamicsGain();
  const double sign = params.negate_conductivity ? -1.0 : 1.0;

  MultistageProblem p;
  p.name = nb == 1 ? "single_storage" : "multi_storage";
  std::vector<Interval> xbox(nx, Interval{params.t_low, params.t_high});
  std::vector<Interval> zbox = xbox;
  for (int i = 0; i < nb; ++i) {
    zbox.push_back({0.0, params.charge_capacity});
    zbox.push_back({0.0, params.heat_pump_capacity});
  }
  auto x = [&](int i) { return Var(nz, i); };
  auto u_in = [&](int i) { return Var(nz, nx + 2 * i); };
  auto u_out = [&](int i) { return Var(nz, nx + 2 * i + 1); };
  auto cop = [&](int i) { return params.cop[0] + params.cop[1] * x(i); };

  for (int t = 0; t < params.horizon; ++t) {
    StageModel s;
    s.nx = nx;
    s.nu = nu;
    Polynomial heat_from_pumps(nz), charge(nz), pump_power(nz);
    for (int i = 0; i < nb; ++i) {
      s.dynamics.push_back(x(i) + gain * (sign * params.conductivity[i] * (x(i) - params.ambient) -
                                          cop(i) * u_out(i) + u_in(i)));
      heat_from_pumps += cop(i) * u_out(i);
      charge += u_in(i);
      pump_power += u_out(i);
    }
    const Polynomial boiler = (demand.heat[t] - heat_from_pumps) * (1.0 / params.boiler_efficiency);
    const Polynomial chiller = (demand.cool[t] - charge) * (1.0 / params.chiller_cop);
    s.cost = params.electricity_price * (pump_power + chiller) + params.gas_price * boiler;
    s.feasible = SemialgebraicSet::Box(zbox);
    s.feasible.AddInequality(boiler);
    s.feasible.AddInequality(params.boiler_capacity - boiler);
    s.feasible.AddInequality(chiller);
    s.feasible.AddInequality(params.chiller_capacity - chiller);
    for (int i = 0; i < nb; ++i) {
      s.feasible.AddInequality(s.dynamics[i] - params.t_low);
      s.feasible.AddInequality(params.t_high - s.dynamics[i]);
    }
    p.stages.push_back(std::move(s));
  }
  p.terminal_cost = Polynomial(nx);
  for (int t = 0; t <= params.horizon; ++t) p.state_sets.push_back(SemialgebraicSet::Box(xbox));
  p.initial = InitialDistribution::Uniform(xbox);

  for (int i = 0; i < nb; ++i) {
    const std::string id = nb == 1 ? "" : std::to_string(i + 1);
    p.state_scaling.names.push_back("x" + id);
    p.control_scaling.names.push_back("u_in" + id);
    p.control_scaling.names.push_back("u_out" + id);
  }
  p.state_scaling.scale.assign(nx, 1.0);
  p.state_scaling.shift.assign(nx, 0.0);
  p.control_scaling.scale.assign(nu, 1.0);
  p.control_scaling.shift.assign(nu, 0.0);
  CheckStageFeasibility(p, warnings);
  return p;
}

MultistageProblem ScaleToUnitBox(const MultistageProblem& physical) {
  const int T = physical.horizon();
  const int nx = physical.nx(), nu = physical.nu();
  MultistageProblem p;
  p.name = physical.name;

  auto box_scaling = [](const std::vector<Interval>& box, std::vector<double>* scale,
                        std::vector<double>* shift) {
    scale->clear();
    shift->clear();
    for (const auto& iv : box) {
      if (!(iv.hi > iv.lo)) throw std::invalid_argument("cannot scale a degenerate box");
      scale->push_back(0.5 * (iv.hi - iv.lo));
      shift->push_back(0.5 * (iv.hi + iv.lo));
    }
  };

  double cost_scale = 0.0;
  for (const auto& s : physical.stages) {
    cost_scale = std::max(cost_scale, Bound(s.cost, s.feasible.box).MaxAbs());
  }
  cost_scale = std::max(cost_scale, Bound(physical.terminal_cost, physical.state_sets[T].box).MaxAbs());
  if (!(cost_scale > 0.0)) cost_scale = 1.0;
  p.cost_scale = cost_scale * physical.cost_scale;

  std::vector<std::vector<double>> xs(T + 1), xh(T + 1);
  for (int t = 0; t <= T; ++t) {
    box_scaling(physical.state_sets[t].box, &xs[t], &xh[t]);
    p.state_sets.push_back(ScaleSet(physical.state_sets[t], xs[t], xh[t], false));
  }
  for (int t = 0; t < T; ++t) {
    const StageModel& s = physical.stages[t];
    std::vector<double> zs, zh;
    box_scaling(s.feasible.box, &zs, &zh);
    // The state part follows X_t so that consecutive stages share coordinates.
    for (int i = 0; i < nx; ++i) {
      zs[i] = xs[t][i];
      zh[i] = xh[t][i];
    }
    StageModel out;
    out.nx = nx;
    out.nu = nu;
    for (int i = 0; i < nx; ++i) {
      Polynomial f = AffineChangeOfVariables(s.dynamics[i], zs, zh);
      out.dynamics.push_back((f - xh[t + 1][i]) * (1.0 / xs[t + 1][i]));
    }
    out.cost = AffineChangeOfVariables(s.cost, zs, zh) * (1.0 / cost_scale);
    out.feasible = ScaleSet(s.feasible, zs, zh, true);
    p.stages.push_back(std::move(out));
    if (t == 0) {
      p.control_scaling = physical.control_scaling;
      for (int j = 0; j < nu; ++j) {
        const double sc = physical.control_scaling.scale.empty() ? 1.0
                                                                 : physical.control_scaling.scale[j];
        const double sh = physical.control_scaling.shift.empty() ? 0.0
                                                                  : physical.control_scaling.shift[j];
        p.control_scaling.scale.resize(nu);
        p.control_scaling.shift.resize(nu);
        p.control_scaling.scale[j] = sc * zs[nx + j];
        p.control_scaling.shift[j] = sc * zh[nx + j] + sh;
      }
    }
  }
  p.terminal_cost = AffineChangeOfVariables(physical.terminal_cost, xs[T], xh[T]) *
                    (1.0 / cost_scale);
  p.state_scaling = physical.state_scaling;
  p.state_scaling.scale.resize(nx, 1.0);
  p.state_scaling.shift.resize(nx, 0.0);
  for (int i = 0; i < nx; ++i) {
    const double sc = physical.state_scaling.scale[i], sh = physical.state_scaling.shift[i];
    p.state_scaling.scale[i] = sc * xs[0][i];
    p.state_scaling.shift[i] = sc * xh[0][i] + sh;
  }

  p.initial = physical.initial;
  if (p.initial.kind == InitialDistribution::Kind::Dirac) {
    for (int i = 0; i < nx; ++i) p.initial.point[i] = (p.initial.point[i] - xh[0][i]) / xs[0][i];
  } else {
    for (int i = 0; i < nx; ++i) {
      p.initial.box[i].lo = (p.initial.box[i].lo - xh[0][i]) / xs[0][i];
      p.initial.box[i].hi = (p.initial.box[i].hi - xh[0][i]) / xs[0][i];
    }
  }
  return p;
}

MultistageProblem BuildSingleStorage(const BoreholeParams& params, const DemandProfile& demand,
                                     std::vector<BuildWarning>* warnings) {
  if (params.conductivity.size() != 1) {
    throw std::invalid_argument("single storage needs exactly one conductivity");
  }
  return ScaleToUnitBox(BuildStorageProblem(params, demand, warnings));
}

MultistageProblem BuildMultiStorage(const BoreholeParams& params, const DemandProfile& demand,
                                    std::vector<BuildWarning>* warnings) {
  if (params.conductivity.size() != 3) {
    throw std::invalid_argument("multi storage needs exactly three conductivities");
  }
  return ScaleToUnitBox(BuildStorageProblem(params, demand, warnings));
}

EliminatedPower ReconstructEliminated(const BoreholeParams& params, double heat, double cool,
                                      std::span<const double> x, std::span<const double> u) {
  double pumped = 0.0, charged = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pumped += (params.cop[0] + params.cop[1] * x[i]) * u[2 * i + 1];
    charged += u[2 * i];
  }
  return {(heat - pumped) / params.boiler_efficiency, (cool - charged) / params.chiller_cop};
}

MultistageProblem BuildScalarTwoStage(bool zero_cost, double x0) {
  MultistageProblem p;
  p.name = zero_cost ? "zero" : "scalar";
  const std::vector<Interval> xu = {{-2.0, 2.0}, {-2.0, 2.0}};
  const std::vector<Interval> x = {{-2.0, 2.0}};
  for (int t = 0; t < 2; ++t) {
    StageModel s;
    s.nx = 1;
    s.nu = 1;
    s.dynamics = {Var(2, 0) + Var(2, 1)};
    s.cost = zero_cost ? Polynomial(2) : Var(2, 0) * Var(2, 0) + Var(2, 1) * Var(2, 1);
    s.feasible = SemialgebraicSet::Box(xu);
    s.feasible.AddInequality(s.dynamics[0] + 2.0);
    s.feasible.AddInequality(2.0 - s.dynamics[0]);
    s.feasible.AddBallConstraint();
    p.stages.push_back(std::move(s));
  }
  p.terminal_cost = zero_cost ? Polynomial(1) : Var(1, 0) * Var(1, 0);
  for (int t = 0; t <= 2; ++t) p.state_sets.push_back(SemialgebraicSet::Box(x));
  p.initial = InitialDistribution::Dirac({x0});
  p.state_scaling = {{"x"}, {1.0}, {0.0}};
  p.control_scaling = {{"u"}, {1.0}, {0.0}};
  return p;
}

// ----------------------------------------------------------------- config

RelaxationOptions VariantOptions(const std::string& variant) {
  if (variant == "affine-2") return {2, false};
  if (variant == "affine-restricted-4") return {4, true};
  if (variant == "quadratic-4") return {4, false};
  throw std::invalid_argument("unknown variant '" + variant +
                              "' (expected affine-2, affine-restricted-4 or quadratic-4)");
}

CaseConfig CaseConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream text;
  text << in.rdbuf();
  return Parse(text.str(), std::filesystem::path(path).parent_path().string(), path);
}

CaseConfig CaseConfig::Parse(const std::string& text, const std::string& base_dir,
                             const std::string& origin) {
  const std::string& path = origin;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  const std::filesystem::path dir = base_dir;
  auto resolve = [&](const std::string& rel) { return (dir / rel).string(); };

  CaseConfig c;
  try {
    c.problem = j.value("problem", c.problem);
    if (c.problem == "multi_storage") {
      c.params = BoreholeParams::Multi();
      c.demand_scale = 3.0;
    } else if (c.problem != "single_storage" && c.problem != "scalar" && c.problem != "zero") {
      throw std::runtime_error("unknown problem '" + c.problem + "'");
    }
    BoreholeParams& p = c.params;
    if (j.contains("prices")) {
      const auto& s = j["prices"];
      p.electricity_price = s.value("electricity_per_kwh", p.electricity_price);
      p.gas_price = s.value("gas_per_kwh", p.gas_price);
    }
    if (j.contains("heat_pump")) {
      const auto& s = j["heat_pump"];
      p.heat_pump_capacity = s.value("capacity_kw", p.heat_pump_capacity);
      if (s.contains("cop")) p.cop = ReadNumberArray(s["cop"]);
      if (s.contains("cop_samples_csv")) {
        const CopFit fit = FitCop(LoadCopCsv(resolve(s["cop_samples_csv"].get<std::string>())));
        p.cop = {fit.intercept, fit.slope};
      }
    }
    if (j.contains("boiler")) {
      const auto& s = j["boiler"];
      p.boiler_efficiency = s.value("efficiency", p.boiler_efficiency);
      p.boiler_capacity = s.value("capacity_kw", p.boiler_capacity);
    }
    if (j.contains("chiller")) {
      const auto& s = j["chiller"];
      p.chiller_cop = s.value("cop", p.chiller_cop);
      p.chiller_capacity = s.value("capacity_kw", p.chiller_capacity);
    }
    if (j.contains("storage")) {
      const auto& s = j["storage"];
      if (s.contains("conductivity_kw_per_c")) {
        p.conductivity = ReadNumberArray(s["conductivity_kw_per_c"]);
      }
      p.inertia = s.value("inertia_kwh_per_c", p.inertia);
      p.charge_capacity = s.value("charge_capacity_kw", p.charge_capacity);
      p.ambient = s.value("ambient_c", p.ambient);
      if (s.contains("range_c")) {
        const auto r = ReadNumberArray(s["range_c"]);
        if (r.size() != 2) throw std::runtime_error("storage.range_c needs two numbers");
        p.t_low = r[0];
        p.t_high = r[1];
      }
      p.negate_conductivity = s.value("negate_conductivity", p.negate_conductivity);
    }
    if (j.contains("horizon")) {
      const auto& s = j["horizon"];
      p.horizon = s.value("stages", p.horizon);
      p.step_hours = s.value("step_hours", p.step_hours);
    }
    if (j.contains("demand")) {
      const auto& s = j["demand"];
      if (s.contains("csv")) c.demand = LoadDemandCsv(resolve(s["csv"].get<std::string>()));
      if (s.contains("heat_kw")) {
        c.demand.heat = s["heat_kw"].get<std::vector<double>>();
        c.demand.cool = s.at("cool_kw").get<std::vector<double>>();
      }
      c.demand_scale = s.value("scale", c.demand_scale);
    }
    if (j.contains("initial") && j["initial"].contains("point")) {
      c.initial_point = ReadNumberArray(j["initial"]["point"]);
    }
    if (j.contains("relaxation")) {
      const auto& s = j["relaxation"];
      c.variant = s.value("variant", c.variant);
    }
    c.order = VariantOptions(c.variant).order;
    if (j.contains("relaxation")) c.order = j["relaxation"].value("order", c.order);
    if (c.order < 2 || c.order % 2 != 0) {
      throw std::runtime_error("relaxation.order must be even and at least 2");
    }
    if (j.contains("tolerance")) {
      const auto& s = j["tolerance"];
      c.epsilon = s.value("epsilon", c.epsilon);
      c.max_iterations = s.value("max_iterations", c.max_iterations);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return c;
}

std::string CaseConfig::ToJson() const {
  json j;
  j["problem"] = problem;
  const BoreholeParams& p = params;
  j["prices"] = {{"electricity_per_kwh", p.electricity_price}, {"gas_per_kwh", p.gas_price}};
  j["heat_pump"] = {{"capacity_kw", p.heat_pump_capacity}, {"cop", p.cop}};
  j["boiler"] = {{"efficiency", p.boiler_efficiency}, {"capacity_kw", p.boiler_capacity}};
  j["chiller"] = {{"cop", p.chiller_cop}, {"capacity_kw", p.chiller_capacity}};
  j["storage"] = {{"conductivity_kw_per_c", p.conductivity},
                  {"inertia_kwh_per_c", p.inertia},
                  {"charge_capacity_kw", p.charge_capacity},
                  {"ambient_c", p.ambient},
                  {"range_c", {p.t_low, p.t_high}},
                  {"negate_conductivity", p.negate_conductivity}};
  j["horizon"] = {{"stages", p.horizon}, {"step_hours", p.step_hours}};
  j["demand"] = {{"heat_kw", demand.heat}, {"cool_kw", demand.cool}, {"scale", demand_scale}};
  if (initial_point) j["initial"] = {{"point", *initial_point}};
  j["relaxation"] = {{"variant", variant}, {"order", order}};
  j["tolerance"] = {{"epsilon", epsilon}, {"max_iterations", max_iterations}};
  return j.dump(2);
}

MultistageProblem CaseConfig::Build(std::vector<BuildWarning>* warnings) const {
  if (problem == "scalar" || problem == "zero") {
    return BuildScalarTwoStage(problem == "zero", initial_point ? initial_point->at(0) : 1.0);
  }
  MultistageProblem physical =
      BuildStorageProblem(params, demand.Scaled(demand_scale), warnings);
  if (initial_point) {
    if (static_cast<int>(initial_point->size()) != physical.nx()) {
      throw std::invalid_argument("initial point has the wrong dimension");
    }
    physical.initial = InitialDistribution::Dirac(*initial_point);
  }
  return ScaleToUnitBox(physical);
}

}  // namespace mddp

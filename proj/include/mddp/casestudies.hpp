#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mddp/poly.hpp"
#include "mddp/relax.hpp"

namespace mddp {

/// Borehole energy system data in physical units (kW, degC, hours, $/kWh).
struct BoreholeParams {
  double electricity_price = 0.096;
  double gas_price = 0.063;
  /// a(x) = cop[0] + cop[1] x.
  std::vector<double> cop = {3.0, 0.1};
  double heat_pump_capacity = 60.0;
  double boiler_efficiency = 0.7;
  double boiler_capacity = 285.0;
  double chiller_cop = 5.0;
  double chiller_capacity = 150.0;
  /// One conductivity per borehole.
  std::vector<double> conductivity = {0.621};
  double inertia = 14805.0;
  double charge_capacity = 100.0;
  double ambient = 12.0;
  double t_low = 0.0;
  double t_high = 12.0;
  double step_hours = 730.0;
  int horizon = 12;
  /// Flips the sign of the conductivity term of the dynamics.
  bool negate_conductivity = false;

  static BoreholeParams Single();
  /// Three boreholes at 0.9, 1.0 and 1.1 times the nominal conductivity,
  /// boiler and chiller sized for three.
  static BoreholeParams Multi();

  /// Throws std::invalid_argument on non-positive capacities, prices, inertia
  /// or step, or an empty temperature range.
  void Validate() const;
  double DynamicsGain() const { return step_hours / inertia; }
};

struct DemandProfile {
  std::vector<double> heat;
  std::vector<double> cool;

  int size() const { return static_cast<int>(heat.size()); }
  /// Bundled twelve-month profile starting in May.
  static DemandProfile Synthetic();
  DemandProfile Scaled(double factor) const;
  void Validate(int horizon) const;
};

/// Reads `stage,d_heat_kw,d_cool_kw` rows. Throws std::runtime_error with the
/// line number on malformed input.
DemandProfile LoadDemandCsv(const std::string& path);
void WriteDemandCsv(const DemandProfile& demand, const std::string& path);

struct CopFit {
  double intercept = 0.0;
  double slope = 0.0;
  double residual_norm = 0.0;
  Polynomial AsPolynomial() const;
};

/// Least-squares affine fit of (temperature, cop) samples.
CopFit FitCop(const std::vector<std::pair<double, double>>& samples);
std::vector<std::pair<double, double>> LoadCopCsv(const std::string& path);

struct BuildWarning {
  int stage = 0;
  std::string message;
};

/// Storage problem in physical units. Per borehole i the controls are
/// (u_in_i, u_out_i); boiler and chiller power are eliminated through the
/// heat and cooling balances and kept as polynomial inequalities.
MultistageProblem BuildStorageProblem(const BoreholeParams& params, const DemandProfile& demand,
                                      std::vector<BuildWarning>* warnings = nullptr);

/// Maps every variable onto [-1, 1] and divides the costs by their largest
/// interval bound. The scalings are recorded in the problem.
MultistageProblem ScaleToUnitBox(const MultistageProblem& physical);

/// BuildStorageProblem followed by ScaleToUnitBox.
MultistageProblem BuildSingleStorage(const BoreholeParams& params, const DemandProfile& demand,
                                     std::vector<BuildWarning>* warnings = nullptr);
MultistageProblem BuildMultiStorage(const BoreholeParams& params, const DemandProfile& demand,
                                    std::vector<BuildWarning>* warnings = nullptr);

/// Physical boiler and chiller power of a (physical) storage stage point.
struct EliminatedPower {
  double boiler = 0.0;
  double chiller = 0.0;
};
EliminatedPower ReconstructEliminated(const BoreholeParams& params, double heat, double cool,
                                      std::span<const double> x, std::span<const double> u);

/// f = x + u, l = x^2 + u^2 (or 0), H = x^2 (or 0), x, u and x + u in
/// [-2, 2], Dirac initial state x0.
MultistageProblem BuildScalarTwoStage(bool zero_cost = false, double x0 = 1.0);

/// Run configuration read from JSON. See README for the schema.
struct CaseConfig {
  std::string problem = "single_storage";  // single_storage | multi_storage | scalar | zero
  BoreholeParams params = BoreholeParams::Single();
  DemandProfile demand = DemandProfile::Synthetic();
  double demand_scale = 1.0;
  /// Initial law in physical units: uniform over the state range when empty.
  std::optional<std::vector<double>> initial_point;
  int order = 2;
  std::string variant = "affine-2";
  double epsilon = 1e-4;
  int max_iterations = 200;

  static CaseConfig Load(const std::string& path);
  /// Relative data paths resolve against `base_dir`; `origin` prefixes errors.
  static CaseConfig Parse(const std::string& text, const std::string& base_dir = ".",
                          const std::string& origin = "config");
  std::string ToJson() const;
  MultistageProblem Build(std::vector<BuildWarning>* warnings = nullptr) const;
};

/// Maps a variant tag to relaxation options: affine-2, affine-restricted-4,
/// quadratic-4. Throws std::invalid_argument on an unknown tag.
RelaxationOptions VariantOptions(const std::string& variant);

}  // namespace mddp

#pragma once

#include <string>
#include <vector>

#include "mddp/casestudies.hpp"
#include "mddp/ddp.hpp"
#include "mddp/gridp.hpp"

namespace mddp {

/// Stable 64-bit FNV-1a digest of the problem part of a config (relaxation
/// and tolerance settings excluded), as 16 hex digits.
std::string Fingerprint(const CaseConfig& config);

/// Effective solver options of a config.
DdpOptions OptionsFor(const CaseConfig& config);

/// Per-coordinate interval around the mean of `q` that carries at least 90%
/// of its mass (Chebyshev with k = sqrt(10)), clipped to `box`.
std::vector<Interval> MassInterval(const MomentVector& q, std::span<const Interval> box);

/// `iteration,rho_ub,theta_lb` in solver units.
void WriteBoundsCsv(const DdpResult& result, const std::string& path);

/// Everything needed to evaluate a cut stack later.
struct CutArtifact {
  CaseConfig config;
  std::string fingerprint;
  RelaxationOptions relaxation;
  MultistageProblem problem;
  ValueFunctionStack stack;
  /// 90%-mass interval of the final forward state moments, per stage 0..T-1,
  /// in solver units.
  std::vector<std::vector<Interval>> mass_intervals;
};

CutArtifact MakeCutArtifact(const CaseConfig& config, const MultistageProblem& problem,
                            const DdpOptions& options, const DdpResult& result);
/// Cut coefficients are dense lists in graded order over the scaled state.
void WriteCutsJson(const CutArtifact& artifact, const std::string& path);
CutArtifact ReadCutsJson(const std::string& path);

struct DpArtifact {
  CaseConfig config;
  std::string fingerprint;
  MultistageProblem problem;
  GridSpec grid;
  GridValueFunction values;
  std::vector<int> infeasible_points;
};

/// Companion metadata of a DP table: `values.csv` -> `values.json`.
std::string DpMetaPath(const std::string& csv_path);
void WriteDpArtifact(const DpArtifact& artifact, const std::string& csv_path);
DpArtifact ReadDpArtifact(const std::string& csv_path);

struct StageComparison {
  int stage = 0;
  double dp_min = 0.0;
  double dp_max = 0.0;
  /// max over finite DP points of cut - dp.
  double max_violation = 0.0;
  /// max |cut - dp| over points inside the mass interval.
  double tracking_error = 0.0;
  std::vector<Interval> interval;
  int points_compared = 0;
  int points_in_interval = 0;
  /// Differences below this are solver noise (1e-6 in solver units).
  double noise = 0.0;

  double range() const { return dp_max - dp_min; }
  /// Violation and tracking error as fractions of the value range. With a
  /// flat DP table they are 0 within `noise` and infinite otherwise.
  double relative_violation() const;
  double relative_tracking() const;
  /// max_violation > fraction * range + noise.
  bool Violates(double fraction) const { return max_violation > fraction * range() + noise; }
};

struct PointComparison {
  int stage = 0;
  std::vector<double> x;  // physical units
  double cut = 0.0;
  double dp = 0.0;  // kInfeasibleValue where the DP has no feasible control
};

/// Values are reported in physical cost units.
struct ComparisonReport {
  std::vector<StageComparison> stages;
  std::vector<PointComparison> points;
};

/// Cuts vs grid values at every grid point of stages 0..T-1. Throws
/// std::invalid_argument if the artifacts come from different problems.
ComparisonReport CompareCutsToDp(const CutArtifact& cuts, const DpArtifact& dp);

void WriteComparisonCsv(const ComparisonReport& report, const MultistageProblem& problem,
                        const std::string& points_path, const std::string& summary_path);

}  // namespace mddp

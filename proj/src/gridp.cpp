#include "mddp/gridp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace mddp {

namespace {

// ------------------------------------------------------- control sweeps

// Polynomial over the controls stored as flat terms.
struct FlatPoly {
  std::vector<double> coef;
  std::vector<int> exps;  // nu per term
  int last_degree = 0;
  int max_exp = 0;
};

FlatPoly Flatten(const Polynomial& p, int nu) {
  FlatPoly out;
  for (const auto& [m, c] : p.terms()) {
    out.coef.push_back(c);
    for (int j = 0; j < nu; ++j) {
      out.exps.push_back(m[j]);
      out.max_exp = std::max(out.max_exp, m[j]);
    }
    out.last_degree = std::max(out.last_degree, m[nu - 1]);
  }
  return out;
}

// Substitutes x into a polynomial over (x, u).
Polynomial PinState(const Polynomial& p, std::span<const double> x, int nu) {
  const int nx = static_cast<int>(x.size());
  std::vector<Polynomial> subs;
  for (int i = 0; i < nx; ++i) subs.push_back(Polynomial::Constant(nu, x[i]));
  for (int j = 0; j < nu; ++j) subs.push_back(Polynomial::Variable(nu, j));
  return Compose(p, subs);
}

double Horner(const double* c, int degree, double u) {
  double v = c[degree];
  for (int e = degree - 1; e >= 0; --e) v = v * u + c[e];
  return v;
}

// What a stage sweep evaluates, all over (x, u).
struct StageFunctions {
  std::vector<Polynomial> constraints;  // C_t, then X_{t+1} o f
  Polynomial cost;
  std::vector<Polynomial> dynamics;
  std::vector<Polynomial> extra;  // evaluated alongside, e.g. cuts o f
};

StageFunctions Functions(const MultistageProblem& problem, int t) {
  const StageModel& stage = problem.stages[t];
  StageFunctions fn;
  fn.constraints = stage.feasible.inequalities;
  for (const Polynomial& g : problem.state_sets[t + 1].inequalities) {
    fn.constraints.push_back(Compose(g, stage.dynamics));
  }
  fn.cost = stage.cost;
  fn.dynamics = stage.dynamics;
  return fn;
}

// Visits every control grid point u with (x, u) feasible. The callback gets
// the flat control index, l(x, u), f(x, u) and the `extra` values.
class ControlSweep {
 public:
  ControlSweep(const StageFunctions& fn, std::span<const double> x,
               const std::vector<GridAxis>& axes, double tolerance)
      : axes_(axes), nu_(static_cast<int>(axes.size())), tolerance_(tolerance) {
    if (nu_ == 0) throw std::invalid_argument("grid sweep needs at least one control");
    auto add = [&](const Polynomial& p) {
      polys_.push_back(Flatten(PinState(p, x, nu_), nu_));
      return static_cast<int>(polys_.size()) - 1;
    };
    for (const auto& g : fn.constraints) constraint_ids_.push_back(add(g));
    cost_id_ = add(fn.cost);
    for (const auto& f : fn.dynamics) dynamics_ids_.push_back(add(f));
    for (const auto& e : fn.extra) extra_ids_.push_back(add(e));

    int max_exp = 0;
    for (const auto& p : polys_) max_exp = std::max(max_exp, p.max_exp);
    pow_stride_ = max_exp + 1;
    powers_.resize(nu_);
    for (int d = 0; d < nu_; ++d) {
      const GridAxis& a = axes_[d];
      powers_[d].assign(static_cast<std::size_t>(a.points) * pow_stride_, 1.0);
      for (int i = 0; i < a.points; ++i) {
        const double u = a.At(i);
        double* row = &powers_[d][static_cast<std::size_t>(i) * pow_stride_];
        for (int e = 1; e < pow_stride_; ++e) row[e] = row[e - 1] * u;
      }
    }
    last_values_.resize(axes_.back().points);
    for (int i = 0; i < axes_.back().points; ++i) last_values_[i] = axes_.back().At(i);
    reduced_.resize(polys_.size() * pow_stride_);
  }

  template <class Visit>
  void Run(Visit&& visit) {
    std::vector<int> outer(nu_ - 1, 0);
    const int nlast = axes_.back().points;
    std::vector<double> next(dynamics_ids_.size());
    std::vector<double> extra(extra_ids_.size());
    std::vector<int> nonlinear;
    long long outer_index = 0;
    while (true) {
      Reduce(outer);
      int lo = 0, hi = nlast - 1;
      nonlinear.clear();
      bool empty = false;
      for (int id : constraint_ids_) {
        const double* c = &reduced_[static_cast<std::size_t>(id) * pow_stride_];
        const int deg = polys_[id].last_degree;
        if (deg == 0 || (deg == 1 && c[1] == 0.0)) {
          if (c[0] < -tolerance_) empty = true;
        } else if (deg == 1) {
          Trim(c, &lo, &hi);
        } else {
          nonlinear.push_back(id);
        }
        if (empty || lo > hi) {
          empty = true;
          break;
        }
      }
      if (!empty) {
        const double* cc = &reduced_[static_cast<std::size_t>(cost_id_) * pow_stride_];
        const int cdeg = polys_[cost_id_].last_degree;
        for (int i = lo; i <= hi; ++i) {
          const double u = last_values_[i];
          bool ok = true;
          for (int id : nonlinear) {
            if (Horner(&reduced_[static_cast<std::size_t>(id) * pow_stride_],
                       polys_[id].last_degree, u) < -tolerance_) {
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          for (std::size_t k = 0; k < dynamics_ids_.size(); ++k) {
            const int id = dynamics_ids_[k];
            next[k] = Horner(&reduced_[static_cast<std::size_t>(id) * pow_stride_],
                             polys_[id].last_degree, u);
          }
          for (std::size_t k = 0; k < extra_ids_.size(); ++k) {
            const int id = extra_ids_[k];
            extra[k] = Horner(&reduced_[static_cast<std::size_t>(id) * pow_stride_],
                              polys_[id].last_degree, u);
          }
          visit(outer_index * nlast + i, Horner(cc, cdeg, u), next, extra);
        }
      }
      // Odometer over the leading controls, first axis slowest.
      int d = nu_ - 2;
      while (d >= 0 && ++outer[d] == axes_[d].points) {
        outer[d] = 0;
        --d;
      }
      if (d < 0) break;
      ++outer_index;
    }
  }

  /// Control values of a flat index.
  std::vector<double> Control(long long index) const {
    std::vector<double> u(nu_);
    for (int d = nu_ - 1; d >= 0; --d) {
      u[d] = axes_[d].At(static_cast<int>(index % axes_[d].points));
      index /= axes_[d].points;
    }
    return u;
  }

 private:
  // Coefficients in the last control with the leading controls fixed.
  void Reduce(const std::vector<int>& outer) {
    std::fill(reduced_.begin(), reduced_.end(), 0.0);
    for (std::size_t p = 0; p < polys_.size(); ++p) {
      const FlatPoly& fp = polys_[p];
      double* out = &reduced_[p * pow_stride_];
      const std::size_t nterms = fp.coef.size();
      for (std::size_t k = 0; k < nterms; ++k) {
        const int* e = &fp.exps[k * nu_];
        double v = fp.coef[k];
        for (int d = 0; d + 1 < nu_; ++d) {
          v *= powers_[d][static_cast<std::size_t>(outer[d]) * pow_stride_ + e[d]];
        }
        out[e[nu_ - 1]] += v;
      }
    }
  }

  // Narrows [lo, hi] to where c0 + c1 u >= -tol; u is increasing in i.
  void Trim(const double* c, int* lo, int* hi) const {
    auto ok = [&](int i) { return c[0] + c[1] * last_values_[i] >= -tolerance_; };
    if (c[1] > 0.0) {
      int a = *lo, b = *hi + 1;  // first feasible index in [a, b]
      while (a < b) {
        const int mid = a + (b - a) / 2;
        if (ok(mid)) b = mid; else a = mid + 1;
      }
      *lo = a;
    } else {
      int a = *lo - 1, b = *hi;  // last feasible index in [a, b]
      while (a < b) {
        const int mid = b - (b - a) / 2;
        if (ok(mid)) a = mid; else b = mid - 1;
      }
      *hi = a;
    }
  }

  const std::vector<GridAxis>& axes_;
  int nu_;
  double tolerance_;
  std::vector<FlatPoly> polys_;
  std::vector<int> constraint_ids_;
  int cost_id_ = 0;
  std::vector<int> dynamics_ids_;
  std::vector<int> extra_ids_;
  int pow_stride_ = 1;
  std::vector<std::vector<double>> powers_;
  std::vector<double> last_values_;
  std::vector<double> reduced_;
};

void CheckAxis(const GridAxis& axis, const Interval& box, const std::string& what) {
  if (axis.points < 2) throw std::invalid_argument(what + " needs at least two grid points");
  const double tol = 1e-9 * std::max(1.0, box.MaxAbs());
  if (std::abs(axis.lo - box.lo) > tol || std::abs(axis.hi - box.hi) > tol) {
    std::ostringstream os;
    os << what << " grid range [" << axis.lo << ", " << axis.hi << "] does not match the box ["
       << box.lo << ", " << box.hi << "]";
    throw std::invalid_argument(os.str());
  }
}

// Boxes shared by every stage, so that one grid serves them all.
std::vector<Interval> StateBox(const MultistageProblem& problem) {
  const std::vector<Interval>& box = problem.state_sets.front().box;
  for (const auto& set : problem.state_sets) {
    for (std::size_t i = 0; i < box.size(); ++i) {
      if (set.box[i].lo != box[i].lo || set.box[i].hi != box[i].hi) {
        throw std::invalid_argument("grid DP needs the same state box at every stage");
      }
    }
  }
  return box;
}

std::vector<Interval> ControlBox(const MultistageProblem& problem) {
  const int nx = problem.nx();
  std::vector<Interval> box(problem.stages.front().feasible.box.begin() + nx,
                            problem.stages.front().feasible.box.end());
  for (const auto& stage : problem.stages) {
    for (std::size_t j = 0; j < box.size(); ++j) {
      const Interval& b = stage.feasible.box[nx + j];
      if (b.lo != box[j].lo || b.hi != box[j].hi) {
        throw std::invalid_argument("grid DP needs the same control box at every stage");
      }
    }
  }
  return box;
}

Trajectory RolloutWith(const MultistageProblem& problem, std::span<const double> x0,
                       const GridSpec& grid, const DpOptions& options,
                       const std::function<std::vector<Polynomial>(int)>& cuts_of,
                       const GridValueFunction* table) {
  grid.Validate(problem);
  const int T = problem.horizon();
  if (static_cast<int>(x0.size()) != problem.nx()) {
    throw std::invalid_argument("x0 has the wrong dimension");
  }
  if (!problem.state_sets[0].Contains(x0, options.constraint_tolerance)) {
    throw std::invalid_argument("x0 lies outside X_0");
  }
  Trajectory out;
  std::vector<double> x(x0.begin(), x0.end());
  out.states.push_back(x);
  for (int t = 0; t < T; ++t) {
    StageFunctions fn = Functions(problem, t);
    if (!table) {
      for (const Polynomial& cut : cuts_of(t + 1)) {
        fn.extra.push_back(Compose(cut, problem.stages[t].dynamics));
      }
      if (fn.extra.empty()) throw RolloutError(t, "no cuts for the next stage");
    }
    ControlSweep sweep(fn, x, grid.control, options.constraint_tolerance);
    double best = std::numeric_limits<double>::infinity();
    double best_cost = 0.0;
    long long best_index = -1;
    sweep.Run([&](long long index, double cost, const std::vector<double>& next,
                  const std::vector<double>& extra) {
      double v;
      if (table) {
        v = table->Interpolate(t + 1, next);
        if (v >= kInfeasibleValue) return;
      } else {
        v = *std::max_element(extra.begin(), extra.end());
      }
      if (cost + v < best) {
        best = cost + v;
        best_cost = cost;
        best_index = index;
      }
    });
    if (best_index < 0) throw RolloutError(t, "no feasible control on the grid");
    const std::vector<double> u = sweep.Control(best_index);
    std::vector<double> xu = x;
    xu.insert(xu.end(), u.begin(), u.end());
    std::vector<double> next;
    for (const auto& f : problem.stages[t].dynamics) next.push_back(f.Evaluate(xu));
    out.controls.push_back(u);
    out.stage_costs.push_back(best_cost);
    out.total_cost += best_cost;
    x = next;
    out.states.push_back(x);
  }
  out.total_cost += problem.terminal_cost.Evaluate(x);
  return out;
}

}  // namespace

// ------------------------------------------------------------------ grids

GridSpec GridSpec::ForProblem(const MultistageProblem& problem, int state_points,
                              int control_points) {
  GridSpec g;
  for (const Interval& b : StateBox(problem)) g.state.push_back({b.lo, b.hi, state_points});
  for (const Interval& b : ControlBox(problem)) g.control.push_back({b.lo, b.hi, control_points});
  return g;
}

GridSpec GridSpec::Parse(const std::string& text, const MultistageProblem& problem) {
  std::vector<int> counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw std::invalid_argument("bad grid '" + text + "': expected counts like 41x1001x1001");
    }
    counts.push_back(n);
  }
  const int nx = problem.nx();
  const int nu = problem.nu();
  std::vector<int> sc, cc;
  if (static_cast<int>(counts.size()) == nx + nu) {
    sc.assign(counts.begin(), counts.begin() + nx);
    cc.assign(counts.begin() + nx, counts.end());
  } else if (counts.size() == 2) {
    sc.assign(nx, counts[0]);
    cc.assign(nu, counts[1]);
  } else {
    throw std::invalid_argument("grid '" + text + "' needs " + std::to_string(nx + nu) +
                                " counts (or two to broadcast)");
  }
  GridSpec g = ForProblem(problem, 2, 2);
  for (int i = 0; i < nx; ++i) g.state[i].points = sc[i];
  for (int j = 0; j < nu; ++j) g.control[j].points = cc[j];
  g.Validate(problem);
  return g;
}

void GridSpec::Validate(const MultistageProblem& problem) const {
  const std::vector<Interval> sbox = StateBox(problem);
  const std::vector<Interval> cbox = ControlBox(problem);
  if (state.size() != sbox.size() || control.size() != cbox.size()) {
    throw std::invalid_argument("grid dimensions do not match the problem");
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    CheckAxis(state[i], sbox[i], "state " + std::to_string(i));
  }
  for (std::size_t j = 0; j < control.size(); ++j) {
    CheckAxis(control[j], cbox[j], "control " + std::to_string(j));
  }
}

double GridSpec::StatePoints() const {
  double n = 1.0;
  for (const auto& a : state) n *= a.points;
  return n;
}

double GridSpec::ControlPoints() const {
  double n = 1.0;
  for (const auto& a : control) n *= a.points;
  return n;
}

std::string GridSpec::ToString() const {
  std::ostringstream os;
  bool first = true;
  for (const auto* axes : {&state, &control}) {
    for (const auto& a : *axes) {
      os << (first ? "" : "x") << a.points;
      first = false;
    }
  }
  return os.str();
}

GridValueFunction::GridValueFunction(std::vector<GridAxis> axes, int horizon)
    : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > 3) {
    throw std::invalid_argument("value tables support one to three state dimensions");
  }
  size_ = 1;
  strides_.assign(axes_.size(), 1);
  for (int d = static_cast<int>(axes_.size()) - 1; d >= 0; --d) {
    strides_[d] = size_;
    size_ *= axes_[d].points;
  }
  tables_.assign(horizon + 1, std::vector<double>(size_, 0.0));
}

std::vector<double> GridValueFunction::Point(int index) const {
  std::vector<double> x(axes_.size());
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    x[d] = axes_[d].At((index / strides_[d]) % axes_[d].points);
  }
  return x;
}

double GridValueFunction::Interpolate(int t, std::span<const double> x) const {
  const std::vector<double>& v = tables_.at(t);
  const int n = static_cast<int>(axes_.size());
  int base = 0;
  double cell_w[3];
  int cell_stride[3];
  for (int d = 0; d < n; ++d) {
    const GridAxis& a = axes_[d];
    const double s = std::clamp((x[d] - a.lo) / a.step(), 0.0, a.points - 1.0);
    const int i0 = std::min(static_cast<int>(s), a.points - 2);
    cell_w[d] = s - i0;
    cell_stride[d] = strides_[d];
    base += i0 * strides_[d];
  }
  double sum = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    int idx = base;
    for (int d = 0; d < n; ++d) {
      if (corner & (1 << d)) {
        w *= cell_w[d];
        idx += cell_stride[d];
      } else {
        w *= 1.0 - cell_w[d];
      }
    }
    if (w == 0.0) continue;
    if (v[idx] >= kInfeasibleValue) return kInfeasibleValue;
    sum += w * v[idx];
  }
  return sum;
}

// --------------------------------------------------------------- solve_dp

void CheckDpTractable(const MultistageProblem& problem, const GridSpec& grid,
                      const DpOptions& options) {
  const int nx = problem.nx();
  if (nx > 3) {
    throw DpRefused("grid DP refused: " + std::to_string(nx) +
                    " states; memory requirements become excessive beyond 3");
  }
  const double evaluations = problem.horizon() * grid.StatePoints() * grid.ControlPoints();
  if (evaluations > options.evaluation_budget) {
    std::ostringstream os;
    os << "grid DP refused: " << nx << " states and " << problem.nu() << " controls on grid "
       << grid.ToString() << " need " << evaluations << " stage evaluations (budget "
       << options.evaluation_budget << "); memory requirements become excessive";
    throw DpRefused(os.str());
  }
}

DpResult SolveDp(const MultistageProblem& problem, const GridSpec& grid,
                 const DpOptions& options) {
  grid.Validate(problem);
  CheckDpTractable(problem, grid, options);
  const int T = problem.horizon();
  DpResult out;
  out.values = GridValueFunction(grid.state, T);
  out.infeasible_points.assign(T + 1, 0);
  GridValueFunction& V = out.values;
  for (int g = 0; g < V.size(); ++g) {
    V.table(T)[g] = problem.terminal_cost.Evaluate(V.Point(g));
  }
  for (int t = T - 1; t >= 0; --t) {
    const StageFunctions fn = Functions(problem, t);
    std::vector<double>& table = V.table(t);
    for (int g = 0; g < V.size(); ++g) {
      const std::vector<double> x = V.Point(g);
      ControlSweep sweep(fn, x, grid.control, options.constraint_tolerance);
      double best = kInfeasibleValue;
      sweep.Run([&](long long, double cost, const std::vector<double>& next,
                    const std::vector<double>&) {
        const double v = V.Interpolate(t + 1, next);
        if (v >= kInfeasibleValue) return;
        best = std::min(best, cost + v);
      });
      table[g] = best;
      if (best >= kInfeasibleValue) ++out.infeasible_points[t];
    }
  }
  return out;
}

// ---------------------------------------------------------------- rollout

RolloutError::RolloutError(int stage, const std::string& what)
    : std::runtime_error("rollout stage " + std::to_string(stage) + ": " + what),
      stage_(stage) {}

Trajectory Rollout(const MultistageProblem& problem, const GridValueFunction& values,
                   std::span<const double> x0, const GridSpec& grid, const DpOptions& options) {
  if (values.horizon() != problem.horizon()) {
    throw std::invalid_argument("value table horizon does not match the problem");
  }
  return RolloutWith(problem, x0, grid, options, nullptr, &values);
}

Trajectory Rollout(const MultistageProblem& problem, const ValueFunctionStack& stack,
                   std::span<const double> x0, const GridSpec& grid, const DpOptions& options) {
  if (stack.horizon() != problem.horizon()) {
    throw std::invalid_argument("cut stack horizon does not match the problem");
  }
  auto cuts_of = [&](int t) {
    if (t == problem.horizon()) return std::vector<Polynomial>{problem.terminal_cost};
    return stack.cuts(t);
  };
  return RolloutWith(problem, x0, grid, options, cuts_of, nullptr);
}

// -------------------------------------------------------------------- csv

void WriteGridCsv(const GridValueFunction& values, const MultistageProblem& problem,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const VariableScaling& sc = problem.state_scaling;
  const int nx = static_cast<int>(values.axes().size());
  out << "stage";
  for (int i = 0; i < nx; ++i) {
    out << "," << (i < static_cast<int>(sc.names.size()) ? sc.names[i] : "x" + std::to_string(i + 1));
  }
  out << ",value\n";
  out.precision(17);
  for (int t = 0; t <= values.horizon(); ++t) {
    for (int g = 0; g < values.size(); ++g) {
      const std::vector<double> x = values.Point(g);
      out << t;
      for (int i = 0; i < nx; ++i) {
        out << "," << (sc.scale.empty() ? x[i] : sc.ToPhysical(i, x[i]));
      }
      const double v = values.table(t)[g];
      if (v >= kInfeasibleValue) {
        out << ",inf\n";
      } else {
        out << "," << v * problem.cost_scale << "\n";
      }
    }
  }
}

GridValueFunction ReadGridCsv(const std::string& path, const MultistageProblem& problem,
                              const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  GridValueFunction values(grid.state, problem.horizon());
  const VariableScaling& sc = problem.state_scaling;
  const int nx = static_cast<int>(grid.state.size());
  std::string line;
  std::getline(in, line);
  std::vector<int> filled(problem.horizon() + 1, 0);
  int lineno = 1;
  std::vector<double> x(nx);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != nx + 2) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(nx + 2) + " columns");
    }
    try {
      const int t = std::stoi(cells[0]);
      if (t < 0 || t > problem.horizon()) throw std::out_of_range("stage");
      int index = 0, stride = 1;
      for (int d = nx - 1; d >= 0; --d) {
        const double phys = std::stod(cells[1 + d]);
        x[d] = sc.scale.empty() ? phys : sc.ToScaled(d, phys);
        const GridAxis& a = grid.state[d];
        const int i = static_cast<int>(std::lround((x[d] - a.lo) / a.step()));
        if (i < 0 || i >= a.points || std::abs(a.At(i) - x[d]) > 1e-6 * (a.hi - a.lo)) {
          throw std::out_of_range("off-grid point");
        }
        index += i * stride;
        stride *= a.points;
      }
      const std::string& vs = cells[nx + 1];
      values.table(t)[index] =
          vs == "inf" ? kInfeasibleValue : std::stod(vs) / problem.cost_scale;
      ++filled[t];
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (int t = 0; t <= problem.horizon(); ++t) {
    if (filled[t] != values.size()) {
      throw std::runtime_error(path + ": stage " + std::to_string(t) + " has " +
                               std::to_string(filled[t]) + " of " +
                               std::to_string(values.size()) + " grid points");
    }
  }
  return values;
}

}  // namespace mddp

#include "mddp/relax.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mddp {

namespace {

int HalfDegree(const Polynomial& g) { return (g.degree() + 1) / 2; }

Monomial Extend(const Monomial& m, int nvars) {
  std::vector<int> e(m.exponents());
  e.resize(nvars, 0);
  return Monomial(std::move(e));
}

Polynomial EmbedPrefix(const Polynomial& p, int nvars) {
  std::vector<int> map(p.nvars());
  for (int i = 0; i < p.nvars(); ++i) map[i] = i;
  return Embed(p, nvars, map);
}

Polynomial MonomialPoly(const Monomial& m) { return Polynomial::FromMonomial(m, 1.0); }

void CheckDegree(const Polynomial& p, int order, const char* what) {
  if (p.degree() > order) {
    throw std::invalid_argument(std::string(what) + " has degree " +
                                std::to_string(p.degree()) + " above the relaxation order " +
                                std::to_string(order));
  }
}

// Constraints of (x, y) with y <= ybar, y >= cuts, x in X and a fresh ball.
SemialgebraicSet LiftState(const SemialgebraicSet& state, double y_bar,
                           const std::vector<Polynomial>& cuts) {
  const int nx = state.nvars;
  SemialgebraicSet lifted;
  lifted.nvars = nx + 1;
  lifted.box = state.box;
  lifted.box.push_back({-y_bar, y_bar});
  for (int j = 0; j < static_cast<int>(state.inequalities.size()); ++j) {
    if (j == state.ball_index) continue;
    lifted.AddInequality(EmbedPrefix(state.inequalities[j], nx + 1));
  }
  const Polynomial y = Polynomial::Variable(nx + 1, nx);
  lifted.AddInequality(1.0 - (1.0 / y_bar) * y);
  for (const auto& cut : cuts) lifted.AddInequality(y - EmbedPrefix(cut, nx + 1));
  lifted.AddBallConstraint();
  return lifted;
}

SemialgebraicSet WithBall(SemialgebraicSet set) {
  if (set.ball_index < 0) set.AddBallConstraint();
  return set;
}

// Assembles moment relaxations as the dual side of a ConicProgram: moments
// are equality multipliers, PSD constraints are dual slacks.
class MomentEmitter {
 public:
  int AddMoments(int count) {
    const int first = builder_.num_rows();
    for (int i = 0; i < count; ++i) builder_.AddRow(0.0);
    rhs_.resize(builder_.num_rows(), 0.0);
    return first;
  }

  // M_{k-d_g}(g m) >= 0 for the moment vector starting at `row0`.
  StageProgram::Certificate AddLocalizer(int row0, int nvars, int moment_order,
                                         const Polynomial& g, int k, bool state_action) {
    const MomentMatrixMap map = LocalizingMatrix(nvars, moment_order, g, k);
    StageProgram::Certificate cert;
    cert.on_state_action = state_action;
    cert.multiplier = g;
    cert.basis = map.basis();
    if (map.size() == 1) {
      cert.block = builder_.AddBlock(ConeKind::NonNegative, 1);
      for (const auto& t : map.terms()) {
        builder_.AddCoefficient(row0 + t.moment, cert.block, 0, -t.coefficient);
      }
    } else {
      cert.block = builder_.AddBlock(ConeKind::PSD, map.size());
      for (const auto& t : map.terms()) {
        builder_.AddMatrixCoefficient(row0 + t.moment, cert.block, t.i, t.j, -t.coefficient);
      }
    }
    return cert;
  }

  // Adds `value` * L(p) to the minimized objective for the moments at `row0`.
  void AddObjective(int row0, int nvars, const Polynomial& p, double value = 1.0) {
    for (const auto& [m, c] : p.terms()) {
      rhs_[row0 + MonomialIndex(Extend(m, nvars))] -= value * c;
    }
  }

  ConicProgramBuilder& builder() { return builder_; }

  ConicProgram Build() {
    for (int r = 0; r < static_cast<int>(rhs_.size()); ++r) builder_.SetRhs(r, rhs_[r]);
    return builder_.Build();
  }

 private:
  ConicProgramBuilder builder_;
  std::vector<double> rhs_;
};

// Adds the linear rows sum coeff * moment = rhs as Free columns.
void AddMomentEquality(ConicProgramBuilder& builder, int block, int entry,
                       int row0, int nvars, const Polynomial& p, double rhs) {
  for (const auto& [m, c] : p.terms()) {
    builder.AddCoefficient(row0 + static_cast<int>(MonomialIndex(Extend(m, nvars))), block,
                           entry, c);
  }
  builder.SetCost(block, entry, rhs);
}

// Power x^alpha of the dynamics, over (x, u).
Polynomial DynamicsPower(const StageModel& stage, const Monomial& alpha) {
  Polynomial out = Polynomial::Constant(stage.nx + stage.nu, 1.0);
  for (int i = 0; i < stage.nx; ++i) {
    if (alpha[i] > 0) out = out * stage.dynamics[i].Pow(alpha[i]);
  }
  return out;
}

// x -> x0, u -> u: substitution over the nu control variables.
std::vector<Polynomial> PinSubstitution(int nx, int nu, const std::vector<double>& x0) {
  std::vector<Polynomial> sub;
  for (int i = 0; i < nx; ++i) sub.push_back(Polynomial::Constant(nu, x0[i]));
  for (int j = 0; j < nu; ++j) sub.push_back(Polynomial::Variable(nu, j));
  return sub;
}

Polynomial Pin(const Polynomial& p, const std::vector<Polynomial>& sub) {
  return sub.empty() ? p : Compose(p, sub);
}

// Constraints of C_t after substitution. Constraints that became positive
// constants are dropped, they only rescale the moment matrix.
std::vector<Polynomial> StageMultipliers(const StageModel& stage,
                                         const std::vector<Polynomial>& sub) {
  std::vector<Polynomial> out;
  for (const auto& g : stage.feasible.inequalities) {
    Polynomial pinned = Pin(g, sub);
    if (!sub.empty() && pinned.degree() <= 0 &&
        pinned.Evaluate(std::vector<double>(pinned.nvars(), 0.0)) >= 0.0) {
      continue;
    }
    out.push_back(std::move(pinned));
  }
  return out;
}

std::vector<Polynomial> SubstitutionFor(const StageModel& stage, const MomentVector& q_in) {
  if (q_in.point.empty() || stage.nu == 0) return {};
  return PinSubstitution(stage.nx, stage.nu, q_in.point);
}

// Moments over (x, u) of delta_{x0} x mu from the moments of mu over u.
Eigen::VectorXd LiftPinned(const Eigen::VectorXd& mu, const std::vector<double>& x0, int nu,
                           int order) {
  const int nx = static_cast<int>(x0.size());
  const MonomialBasis basis(nx + nu, order);
  Eigen::VectorXd out(basis.size());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    double scale = 1.0;
    std::vector<int> e(nu);
    for (int v = 0; v < nx; ++v) scale *= std::pow(x0[v], basis[i][v]);
    for (int j = 0; j < nu; ++j) e[j] = basis[i][nx + j];
    out[i] = scale * mu[MonomialIndex(Monomial(std::move(e)))];
  }
  return out;
}

void CheckStage(const StageModel& stage, const MomentVector& q_in, const EpigraphSet& epi,
                const RelaxationOptions& options) {
  if (options.order < 2 || options.order % 2 != 0) {
    throw std::invalid_argument("relaxation order must be a positive even number");
  }
  if (static_cast<int>(stage.dynamics.size()) != stage.nx) {
    throw std::invalid_argument("dynamics must have one component per state");
  }
  if (q_in.nvars != stage.nx) throw std::invalid_argument("q_in must be a state moment vector");
  if (epi.cuts.empty()) throw std::invalid_argument("epigraph set has no cuts");
  CheckDegree(stage.cost, options.order, "stage cost");
  for (const auto& g : stage.feasible.inequalities) CheckDegree(g, options.order, "constraint");
  for (const auto& cut : epi.cuts) CheckDegree(cut, options.order, "cut");
  const int d = ValueDegree(stage, options);
  if (q_in.order < d) throw std::invalid_argument("q_in order below the value degree");
}

}  // namespace

// ------------------------------------------------------------------- sets

SemialgebraicSet SemialgebraicSet::Box(std::span<const Interval> box) {
  SemialgebraicSet set;
  set.nvars = static_cast<int>(box.size());
  set.box.assign(box.begin(), box.end());
  for (int i = 0; i < set.nvars; ++i) {
    const Polynomial z = Polynomial::Variable(set.nvars, i);
    set.inequalities.push_back(z - box[i].lo);
    set.inequalities.push_back(box[i].hi - z);
  }
  return set;
}

void SemialgebraicSet::AddInequality(Polynomial g) {
  if (g.nvars() != nvars) throw std::invalid_argument("inequality over the wrong space");
  inequalities.push_back(std::move(g));
}

void SemialgebraicSet::AddBallConstraint(double factor) {
  if (static_cast<int>(box.size()) != nvars) {
    throw std::invalid_argument("ball constraint needs a bounding box");
  }
  double sq = 0.0;
  for (const auto& iv : box) sq += std::pow(iv.MaxAbs(), 2);
  const double radius = factor * std::sqrt(sq);
  // 1 - |z|^2 / R^2: same set as R^2 - |z|^2, with unit-sized coefficients.
  Polynomial g = Polynomial::Constant(nvars, 1.0);
  for (int i = 0; i < nvars; ++i) {
    const Polynomial z = Polynomial::Variable(nvars, i);
    g -= (1.0 / (radius * radius)) * (z * z);
  }
  if (ball_index >= 0) {
    inequalities[ball_index] = std::move(g);
  } else {
    ball_index = static_cast<int>(inequalities.size());
    inequalities.push_back(std::move(g));
  }
  ball_radius = radius;
}

bool SemialgebraicSet::Contains(std::span<const double> point, double tolerance) const {
  for (const auto& g : inequalities) {
    if (g.Evaluate(point) < -tolerance) return false;
  }
  return true;
}

int StageModel::kappa() const {
  int k = 1;
  for (const auto& f : dynamics) k = std::max(k, f.degree());
  return k;
}

InitialDistribution InitialDistribution::Dirac(std::vector<double> point) {
  InitialDistribution d;
  d.kind = Kind::Dirac;
  d.point = std::move(point);
  return d;
}

InitialDistribution InitialDistribution::Uniform(std::vector<Interval> box) {
  InitialDistribution d;
  d.kind = Kind::UniformBox;
  d.box = std::move(box);
  return d;
}

// ---------------------------------------------------------------- moments

double MomentVector::operator()(const Monomial& m) const {
  const std::size_t idx = MonomialIndex(m);
  if (m.nvars() != nvars || idx >= static_cast<std::size_t>(entries.size())) {
    throw std::out_of_range("moment outside the truncation");
  }
  return entries[idx];
}

double MomentVector::Apply(const Polynomial& p) const {
  if (p.nvars() != nvars) throw std::invalid_argument("polynomial over the wrong space");
  double sum = 0.0;
  for (const auto& [m, c] : p.terms()) sum += c * (*this)(m);
  return sum;
}

MomentVector MomentVector::Marginal(int n, MomentSpace target) const {
  MomentVector out;
  out.space = target;
  out.nvars = n;
  out.order = order;
  const MonomialBasis basis(n, order);
  out.entries.resize(basis.size());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    out.entries[i] = entries[MonomialIndex(Extend(basis[i], nvars))];
  }
  return out;
}

MomentVector MomentsOfDistribution(const InitialDistribution& dist, MomentSpace space,
                                   int order) {
  if (space == MomentSpace::StateEpigraph) {
    throw std::invalid_argument("distributions are specified over the state only");
  }
  const int n = dist.kind == InitialDistribution::Kind::Dirac
                    ? static_cast<int>(dist.point.size())
                    : static_cast<int>(dist.box.size());
  MomentVector out;
  out.space = space;
  out.nvars = n;
  out.order = order;
  if (dist.kind == InitialDistribution::Kind::Dirac) out.point = dist.point;
  const MonomialBasis basis(n, order);
  out.entries.resize(basis.size());
  for (std::size_t idx = 0; idx < basis.size(); ++idx) {
    double value = 1.0;
    for (int i = 0; i < n; ++i) {
      const int a = basis[idx][i];
      if (dist.kind == InitialDistribution::Kind::Dirac) {
        value *= std::pow(dist.point[i], a);
      } else {
        const double lo = dist.box[i].lo, hi = dist.box[i].hi;
        if (!(hi > lo)) throw std::invalid_argument("uniform box must have positive width");
        value *= (std::pow(hi, a + 1) - std::pow(lo, a + 1)) / ((a + 1) * (hi - lo));
      }
    }
    out.entries[idx] = value;
  }
  return out;
}

Eigen::MatrixXd MomentMatrixMap::Evaluate(const Eigen::VectorXd& moments) const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(size_, size_);
  for (const auto& t : terms_) M(t.i, t.j) += t.coefficient * moments[t.moment];
  for (int j = 0; j < size_; ++j)
    for (int i = j + 1; i < size_; ++i) M(j, i) = M(i, j);
  return M;
}

MomentMatrixMap LocalizingMatrix(int nvars, int moment_order, const Polynomial& g, int k) {
  if (g.nvars() != nvars) throw std::invalid_argument("localizing polynomial over wrong space");
  if (2 * k > moment_order) throw std::invalid_argument("moment matrix order too high");
  const int half = k - HalfDegree(g);
  if (half < 0 || g.degree() > 2 * k) {
    throw std::invalid_argument("localizing polynomial degree exceeds the relaxation order");
  }
  MomentMatrixMap map;
  map.basis_ = MonomialBasis(nvars, half);
  map.size_ = static_cast<int>(map.basis_.size());
  for (int j = 0; j < map.size_; ++j) {
    for (int i = j; i < map.size_; ++i) {
      const Monomial bij = map.basis_[i] * map.basis_[j];
      for (const auto& [m, c] : g.terms()) {
        map.terms_.push_back({i, j, static_cast<int>(MonomialIndex(m * bij)), c});
      }
    }
  }
  return map;
}

MomentMatrixMap MomentMatrix(int nvars, int moment_order, int k) {
  return LocalizingMatrix(nvars, moment_order, Polynomial::Constant(nvars, 1.0), k);
}

// --------------------------------------------------------------- epigraph

EpigraphSet EpigraphSet::Terminal(SemialgebraicSet state_set, Polynomial terminal_cost) {
  EpigraphSet epi;
  epi.state_set = std::move(state_set);
  epi.cuts.push_back(std::move(terminal_cost));
  epi.terminal = true;
  return epi;
}

EpigraphSet EpigraphSet::Cuts(SemialgebraicSet state_set, double y_bar, Polynomial first_cut) {
  EpigraphSet epi;
  epi.state_set = std::move(state_set);
  epi.y_bar = y_bar;
  epi.cuts.push_back(std::move(first_cut));
  return epi;
}

void EpigraphSet::AddCut(Polynomial cut) {
  if (terminal) throw std::logic_error("terminal epigraph takes no cuts");
  cuts.push_back(std::move(cut));
}

double EpigraphSet::Evaluate(std::span<const double> x) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& cut : cuts) best = std::max(best, cut.Evaluate(x));
  return best;
}

SemialgebraicSet EpigraphSet::LiftedSet() const {
  if (terminal) return WithBall(state_set);
  return LiftState(state_set, y_bar, cuts);
}

int ValueDegree(const StageModel& stage, const RelaxationOptions& options) {
  const int d = options.order / stage.kappa();
  return options.affine_restricted ? std::min(d, 1) : d;
}

std::vector<double> EpigraphBounds(const MultistageProblem& problem) {
  const int T = problem.horizon();
  std::vector<double> bounds(T + 1, 0.0);
  // A zero bound would leave the epigraph without interior; any positive
  // value is valid there.
  auto positive = [](double v) { return v > 0.0 ? v : 1.0; };
  double tail = Bound(problem.terminal_cost, problem.state_sets[T].box).MaxAbs();
  bounds[T] = positive(2.0 * tail);
  for (int t = T - 1; t >= 0; --t) {
    tail += Bound(problem.stages[t].cost, problem.stages[t].feasible.box).MaxAbs();
    bounds[t] = positive(2.0 * tail);
  }
  return bounds;
}

// ------------------------------------------------------------ stage builds

StageProgram BuildForwardSdp(const StageModel& stage, const MomentVector& q_in,
                             const EpigraphSet& epi_next, const RelaxationOptions& options) {
  CheckStage(stage, q_in, epi_next, options);
  const int nx = stage.nx, nz = stage.nx + stage.nu;
  const int order = options.order, k = order / 2;
  const int nq = epi_next.terminal ? nx : nx + 1;
  const int d = ValueDegree(stage, options);
  const std::vector<Polynomial> sub = SubstitutionFor(stage, q_in);
  const int nm = sub.empty() ? nz : stage.nu;

  StageProgram sp;
  sp.nx = nx;
  sp.nu = stage.nu;
  sp.order = order;
  sp.terminal = epi_next.terminal;
  sp.m_basis = MonomialBasis(nm, order);
  sp.q_basis = MonomialBasis(nq, order);
  sp.v_basis = MonomialBasis(nx, d);
  sp.d_basis = MonomialBasis(nx, sub.empty() ? d - 1 : std::min(d - 1, 0));
  sp.cost = stage.cost;
  sp.dynamics = stage.dynamics;
  if (epi_next.terminal) sp.terminal_cost = epi_next.cuts.front();
  sp.q_in = q_in;
  if (!sub.empty()) sp.pinned_state = q_in.point;

  MomentEmitter em;
  sp.m_row = em.AddMoments(static_cast<int>(sp.m_basis.size()));
  sp.q_row = em.AddMoments(static_cast<int>(sp.q_basis.size()));
  auto& builder = em.builder();

  // Dynamics rows: L_m(x^a - f^a) + q_next^{a,0} = q_in^a.
  const int vblock = builder.AddBlock(ConeKind::Free, static_cast<int>(sp.v_basis.size()));
  sp.v_column = builder.Offset(vblock);
  for (std::size_t a = 0; a < sp.v_basis.size(); ++a) {
    const Monomial& alpha = sp.v_basis[a];
    const Polynomial fa = DynamicsPower(stage, alpha);
    CheckDegree(fa, order, "dynamics power");
    const Polynomial row = Pin(MonomialPoly(Extend(alpha, nz)) - fa, sub);
    for (const auto& [m, c] : row.terms()) {
      builder.AddCoefficient(sp.m_row + static_cast<int>(MonomialIndex(m)), vblock,
                             static_cast<int>(a), c);
    }
    builder.AddCoefficient(sp.q_row + static_cast<int>(MonomialIndex(Extend(alpha, nq))),
                           vblock, static_cast<int>(a), 1.0);
    builder.SetCost(vblock, static_cast<int>(a), q_in(alpha));
  }
  // Marginal rows: L_m(x^b) = q_in^b.
  if (d >= 1) {
    const int dblock = builder.AddBlock(ConeKind::Free, static_cast<int>(sp.d_basis.size()));
    sp.d_column = builder.Offset(dblock);
    for (std::size_t b = 0; b < sp.d_basis.size(); ++b) {
      AddMomentEquality(builder, dblock, static_cast<int>(b), sp.m_row, nm,
                        Pin(MonomialPoly(Extend(sp.d_basis[b], nz)), sub), q_in(sp.d_basis[b]));
    }
  } else {
    sp.d_column = builder.num_variables();
  }

  // Moment and localizing matrices.
  sp.certificates.push_back(
      em.AddLocalizer(sp.m_row, nm, order, Polynomial::Constant(nm, 1.0), k, true));
  for (const auto& g : StageMultipliers(stage, sub)) {
    sp.certificates.push_back(em.AddLocalizer(sp.m_row, nm, order, g, k, true));
  }
  const SemialgebraicSet lifted = epi_next.LiftedSet();
  sp.certificates.push_back(
      em.AddLocalizer(sp.q_row, nq, order, Polynomial::Constant(nq, 1.0), k, false));
  for (const auto& g : lifted.inequalities) {
    CheckDegree(g, order, "epigraph constraint");
    sp.certificates.push_back(em.AddLocalizer(sp.q_row, nq, order, g, k, false));
  }

  // Objective L_m(l) + q^{0,1}, or L_m(l) + L_q(H) at the terminal stage.
  em.AddObjective(sp.m_row, nm, Pin(stage.cost, sub));
  if (epi_next.terminal) {
    CheckDegree(sp.terminal_cost, order, "terminal cost");
    em.AddObjective(sp.q_row, nq, sp.terminal_cost);
  } else {
    em.AddObjective(sp.q_row, nq, Polynomial::Variable(nq, nx));
  }
  sp.program = em.Build();
  return sp;
}

StageProgram BuildBackwardSos(const StageModel& stage, const MomentVector& q_obj,
                              const EpigraphSet& epi_next, const RelaxationOptions& options) {
  CheckStage(stage, q_obj, epi_next, options);
  const int nx = stage.nx, nz = stage.nx + stage.nu;
  const int order = options.order, k = order / 2;
  const int nq = epi_next.terminal ? nx : nx + 1;
  const int d = ValueDegree(stage, options);
  const std::vector<Polynomial> sub = SubstitutionFor(stage, q_obj);
  const int nmv = sub.empty() ? nz : stage.nu;

  StageProgram sp;
  sp.nx = nx;
  sp.nu = stage.nu;
  sp.order = order;
  sp.terminal = epi_next.terminal;
  sp.m_basis = MonomialBasis(nmv, order);
  sp.q_basis = MonomialBasis(nq, order);
  sp.v_basis = MonomialBasis(nx, d);
  sp.d_basis = MonomialBasis(nx, sub.empty() ? d - 1 : std::min(d - 1, 0));
  sp.cost = stage.cost;
  sp.dynamics = stage.dynamics;
  if (epi_next.terminal) sp.terminal_cost = epi_next.cuts.front();
  sp.q_in = q_obj;
  if (!sub.empty()) sp.pinned_state = q_obj.point;

  // One equality row per monomial coefficient of the two identities
  //   l - V(x) - D(x) + V(f) - sigma_0 - sum sigma_j g_j = 0   over (x, u)
  //   y - V(x) - s_0 - sum s_j v_j = 0                         over (x, y)
  // written with the free coordinates holding -V and -D.
  ConicProgramBuilder builder;
  const int nm = static_cast<int>(sp.m_basis.size());
  const int nqb = static_cast<int>(sp.q_basis.size());
  for (int r = 0; r < nm + nqb; ++r) builder.AddRow(0.0);
  sp.m_row = 0;
  sp.q_row = nm;
  auto row_of = [&](bool state_action, const Monomial& m) {
    return state_action ? sp.m_row + static_cast<int>(sp.m_basis.IndexOf(m))
                        : sp.q_row + static_cast<int>(sp.q_basis.IndexOf(m));
  };

  const int vblock = builder.AddBlock(ConeKind::Free, static_cast<int>(sp.v_basis.size()));
  sp.v_column = builder.Offset(vblock);
  std::vector<double> identity_map(nx);
  for (std::size_t a = 0; a < sp.v_basis.size(); ++a) {
    const Polynomial xa = MonomialPoly(sp.v_basis[a]);
    const Polynomial shifted = Compose(xa, stage.dynamics);
    CheckDegree(shifted, order, "dynamics power");
    // Coefficient of -V_a in the (x, u) identity: -(x^a) + (x^a o f) negated.
    const Polynomial coeff = Pin(EmbedPrefix(xa, nz) - shifted, sub);
    for (const auto& [m, c] : coeff.terms()) {
      builder.AddCoefficient(row_of(true, m), vblock, static_cast<int>(a), c);
    }
    builder.AddCoefficient(row_of(false, Extend(sp.v_basis[a], nq)), vblock,
                           static_cast<int>(a), 1.0);
    builder.SetCost(vblock, static_cast<int>(a), q_obj.Apply(xa));
  }
  if (d >= 1) {
    const int dblock = builder.AddBlock(ConeKind::Free, static_cast<int>(sp.d_basis.size()));
    sp.d_column = builder.Offset(dblock);
    for (std::size_t b = 0; b < sp.d_basis.size(); ++b) {
      const Polynomial xb = MonomialPoly(sp.d_basis[b]);
      const Polynomial lifted_xb = Pin(EmbedPrefix(xb, nz), sub);
      for (const auto& [m, c] : lifted_xb.terms()) {
        builder.AddCoefficient(row_of(true, m), dblock, static_cast<int>(b), c);
      }
      builder.SetCost(dblock, static_cast<int>(b), q_obj.Apply(xb));
    }
  } else {
    sp.d_column = builder.num_variables();
  }

  // Gram blocks: sigma_j = b' G_j b contributes -g_j b_i b_j to row gamma.
  auto add_gram = [&](const Polynomial& g, bool state_action) {
    const int nvars = state_action ? nmv : nq;
    const int half = k - HalfDegree(g);
    if (half < 0) throw std::invalid_argument("multiplier degree exceeds the relaxation order");
    StageProgram::Certificate cert;
    cert.on_state_action = state_action;
    cert.multiplier = g;
    cert.basis = MonomialBasis(nvars, half);
    const int n = static_cast<int>(cert.basis.size());
    cert.block = builder.AddBlock(n == 1 ? ConeKind::NonNegative : ConeKind::PSD, n);
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) {
        const Polynomial prod = g * MonomialPoly(cert.basis[i]) * MonomialPoly(cert.basis[j]);
        for (const auto& [m, c] : prod.terms()) {
          if (n == 1) {
            builder.AddCoefficient(row_of(state_action, m), cert.block, 0, -c);
          } else {
            builder.AddMatrixCoefficient(row_of(state_action, m), cert.block, i, j, -c);
          }
        }
      }
    }
    sp.certificates.push_back(std::move(cert));
  };
  add_gram(Polynomial::Constant(nmv, 1.0), true);
  for (const auto& g : StageMultipliers(stage, sub)) add_gram(g, true);
  const SemialgebraicSet lifted = epi_next.LiftedSet();
  add_gram(Polynomial::Constant(nq, 1.0), false);
  for (const auto& g : lifted.inequalities) add_gram(g, false);

  // Right-hand sides: -l over (x, u); -y or -H over the next-stage side.
  const Polynomial pinned_cost = Pin(stage.cost, sub);
  for (const auto& [m, c] : pinned_cost.terms()) {
    builder.SetRhs(row_of(true, m), -c);
  }
  const Polynomial tail = epi_next.terminal ? sp.terminal_cost : Polynomial::Variable(nq, nx);
  for (const auto& [m, c] : tail.terms()) builder.SetRhs(row_of(false, m), -c);

  sp.program = builder.Build();
  return sp;
}

ForwardResult ExtractForward(const StageProgram& sp, const ConicSolution& solution) {
  ForwardResult out;
  out.status = solution.status;
  out.value = -solution.dual_objective;
  const int nz = sp.nx + sp.nu;
  const int nq = sp.terminal ? sp.nx : sp.nx + 1;
  out.m.space = MomentSpace::StateAction;
  out.m.nvars = nz;
  out.m.order = sp.order;
  out.m.entries = solution.y.segment(sp.m_row, sp.m_basis.size());
  if (!sp.pinned_state.empty()) {
    out.m.entries = LiftPinned(out.m.entries, sp.pinned_state, sp.nu, sp.order);
  }
  out.q_next.space = sp.terminal ? MomentSpace::State : MomentSpace::StateEpigraph;
  out.q_next.nvars = nq;
  out.q_next.order = sp.order;
  out.q_next.entries = solution.y.segment(sp.q_row, sp.q_basis.size());
  out.next_state = sp.terminal ? out.q_next : out.q_next.Marginal(sp.nx, MomentSpace::State);
  out.stage_cost = out.m.Apply(sp.cost);
  return out;
}

BackwardResult ExtractBackward(const StageProgram& sp, const ConicSolution& solution) {
  BackwardResult out;
  out.status = solution.status;
  out.value = -solution.primal_objective;
  std::vector<double> v(sp.v_basis.size()), dcoef(sp.d_basis.size());
  for (std::size_t a = 0; a < v.size(); ++a) v[a] = -solution.x[sp.v_column + a];
  for (std::size_t b = 0; b < dcoef.size(); ++b) dcoef[b] = -solution.x[sp.d_column + b];
  out.value_next = Polynomial::FromCoefficients(sp.v_basis, v);
  out.offset = dcoef.empty() ? Polynomial(sp.nx) : Polynomial::FromCoefficients(sp.d_basis, dcoef);
  out.cut = out.value_next + out.offset;
  return out;
}

double CertificateResidual(const StageProgram& sp, const ConicSolution& solution) {
  const BackwardResult br = ExtractBackward(sp, solution);
  const int nz = sp.nx + sp.nu;
  const int nq = sp.terminal ? sp.nx : sp.nx + 1;
  const auto offsets = sp.program.BlockOffsets();

  // Left-hand sides built from the problem data.
  const std::vector<Polynomial> sub =
      sp.pinned_state.empty() ? std::vector<Polynomial>{}
                              : PinSubstitution(sp.nx, sp.nu, sp.pinned_state);
  const int nm = sub.empty() ? nz : sp.nu;
  const Polynomial lhs_u =
      Pin(sp.cost - EmbedPrefix(br.cut, nz) + Compose(br.value_next, sp.dynamics), sub);
  const Polynomial tail = sp.terminal ? sp.terminal_cost : Polynomial::Variable(nq, sp.nx);
  const Polynomial lhs_y = tail - EmbedPrefix(br.value_next, nq);

  Polynomial rhs_u(nm), rhs_y(nq);
  for (const auto& cert : sp.certificates) {
    const ConeBlock& block = sp.program.blocks[cert.block];
    const int n = static_cast<int>(cert.basis.size());
    Eigen::MatrixXd G(n, n);
    if (block.kind == ConeKind::PSD) {
      G = Smat(solution.x.segment(offsets[cert.block], block.dimension()), n);
    } else {
      G(0, 0) = solution.x[offsets[cert.block]];
    }
    Polynomial sigma(cert.multiplier.nvars());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        sigma += G(i, j) * MonomialPoly(cert.basis[i] * cert.basis[j]);
      }
    }
    (cert.on_state_action ? rhs_u : rhs_y) += sigma * cert.multiplier;
  }
  return std::max(MaxCoefficientDifference(lhs_u, rhs_u),
                  MaxCoefficientDifference(lhs_y, rhs_y));
}

// ------------------------------------------------------------ undecomposed

UndecomposedProgram BuildUndecomposedSdp(const MultistageProblem& problem,
                                         const RelaxationOptions& options) {
  if (problem.horizon() != 2) throw std::invalid_argument("undecomposed relaxation needs T = 2");
  const int order = options.order, k = order / 2;
  const StageModel& s0 = problem.stages[0];
  const StageModel& s1 = problem.stages[1];
  const int nx = s0.nx, nz0 = s0.nx + s0.nu, nz1 = s1.nx + s1.nu;
  const std::vector<double> ybar = EpigraphBounds(problem);
  const MomentVector q0 = MomentsOfDistribution(problem.initial, MomentSpace::State, order);
  const std::vector<Polynomial> sub0 = SubstitutionFor(s0, q0);
  const int nm0 = sub0.empty() ? nz0 : s0.nu;

  MomentEmitter em;
  const int m0 = em.AddMoments(static_cast<int>(MonomialCount(nm0, order)));
  const int q1 = em.AddMoments(static_cast<int>(MonomialCount(nx + 1, order)));
  const int m1 = em.AddMoments(static_cast<int>(MonomialCount(nz1, order)));
  const int q2 = em.AddMoments(static_cast<int>(MonomialCount(nx, order)));
  auto& builder = em.builder();

  // Transition rows of stage t from moments `in` (fixed data or a variable
  // vector) to the variable vector `next`.
  auto add_transition = [&](const StageModel& stage, int m_row, int next_row, int next_nvars,
                            const MomentVector* fixed_in, int in_row, int in_nvars,
                            const std::vector<Polynomial>& sub) {
    const int nz = stage.nx + stage.nu;
    const int d = ValueDegree(stage, options);
    const MonomialBasis vb(stage.nx, d);
    const int vblock = builder.AddBlock(ConeKind::Free, static_cast<int>(vb.size()));
    for (std::size_t a = 0; a < vb.size(); ++a) {
      const Polynomial full = MonomialPoly(Extend(vb[a], nz)) - DynamicsPower(stage, vb[a]);
      CheckDegree(full, order, "dynamics power");
      const Polynomial row = Pin(full, sub);
      for (const auto& [m, c] : row.terms()) {
        builder.AddCoefficient(m_row + static_cast<int>(MonomialIndex(m)), vblock,
                               static_cast<int>(a), c);
      }
      builder.AddCoefficient(next_row + static_cast<int>(MonomialIndex(Extend(vb[a], next_nvars))),
                             vblock, static_cast<int>(a), 1.0);
      if (fixed_in) {
        builder.SetCost(vblock, static_cast<int>(a), (*fixed_in)(vb[a]));
      } else {
        builder.AddCoefficient(in_row + static_cast<int>(MonomialIndex(Extend(vb[a], in_nvars))),
                               vblock, static_cast<int>(a), -1.0);
      }
    }
    if (d < 1) return;
    const MonomialBasis db(stage.nx, sub.empty() ? d - 1 : 0);
    const int dblock = builder.AddBlock(ConeKind::Free, static_cast<int>(db.size()));
    for (std::size_t b = 0; b < db.size(); ++b) {
      const Polynomial row = Pin(MonomialPoly(Extend(db[b], nz)), sub);
      for (const auto& [m, c] : row.terms()) {
        builder.AddCoefficient(m_row + static_cast<int>(MonomialIndex(m)), dblock,
                               static_cast<int>(b), c);
      }
      if (fixed_in) {
        builder.SetCost(dblock, static_cast<int>(b), (*fixed_in)(db[b]));
      } else {
        builder.AddCoefficient(in_row + static_cast<int>(MonomialIndex(Extend(db[b], in_nvars))),
                               dblock, static_cast<int>(b), -1.0);
      }
    }
  };
  add_transition(s0, m0, q1, nx + 1, &q0, 0, 0, sub0);
  add_transition(s1, m1, q2, nx, nullptr, q1, nx + 1, {});

  auto add_set = [&](int row0, int nvars, const std::vector<Polynomial>& gs) {
    em.AddLocalizer(row0, nvars, order, Polynomial::Constant(nvars, 1.0), k, true);
    for (const auto& g : gs) em.AddLocalizer(row0, nvars, order, g, k, true);
  };
  add_set(m0, nm0, StageMultipliers(s0, sub0));
  add_set(q1, nx + 1, LiftState(problem.state_sets[1], ybar[1], {}).inequalities);
  add_set(m1, nz1, s1.feasible.inequalities);
  add_set(q2, nx, WithBall(problem.state_sets[2]).inequalities);

  em.AddObjective(m0, nm0, Pin(s0.cost, sub0));
  em.AddObjective(m1, nz1, s1.cost);
  em.AddObjective(q2, nx, problem.terminal_cost);

  UndecomposedProgram out;
  out.program = em.Build();
  return out;
}

}  // namespace mddp

#include "mddp/conic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace mddp {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

}  // namespace

int SvecIndex(int n, int i, int j) {
  if (i < j) std::swap(i, j);
  // Column j starts after columns 0..j-1 of the lower triangle.
  return j * n - j * (j - 1) / 2 + (i - j);
}

Eigen::VectorXd Svec(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  Eigen::VectorXd v(n * (n + 1) / 2);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      v[k++] = (i == j) ? X(i, j) : kSqrt2 * 0.5 * (X(i, j) + X(j, i));
    }
  }
  return v;
}

Eigen::MatrixXd Smat(const Eigen::Ref<const Eigen::VectorXd>& v, int n) {
  Eigen::MatrixXd X(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      const double value = (i == j) ? v[k] : v[k] / kSqrt2;
      X(i, j) = value;
      X(j, i) = value;
      ++k;
    }
  }
  return X;
}

// ------------------------------------------------------------ ConicProgram

std::vector<int> ConicProgram::BlockOffsets() const {
  std::vector<int> offsets;
  offsets.reserve(blocks.size() + 1);
  int total = 0;
  for (const auto& block : blocks) {
    offsets.push_back(total);
    total += block.dimension();
  }
  offsets.push_back(total);
  return offsets;
}

void ConicProgram::Validate() const {
  int total = 0;
  for (const auto& block : blocks) {
    if (block.size <= 0) throw std::invalid_argument("empty cone block");
    total += block.dimension();
  }
  if (total != c.size()) {
    throw std::invalid_argument("cone layout covers " + std::to_string(total) +
                                " coordinates but c has " + std::to_string(c.size()));
  }
  if (A.cols() != c.size() || A.rows() != b.size()) {
    throw std::invalid_argument("A has inconsistent dimensions");
  }
  for (int r = 0; r < A.rows(); ++r) {
    bool nonzero = false;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it) {
      if (it.value() != 0.0) {
        nonzero = true;
        break;
      }
    }
    if (!nonzero) throw std::invalid_argument("row " + std::to_string(r) + " of A is zero");
  }
}

void ConicProgram::WriteDebugDump(std::ostream& os) const {
  const auto offsets = BlockOffsets();
  os << std::setprecision(17);
  os << "conic_program rows " << num_rows() << " variables " << num_variables() << "\n";
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const char* kind = blocks[k].kind == ConeKind::Free          ? "free"
                       : blocks[k].kind == ConeKind::NonNegative ? "nonnegative"
                                                                  : "psd";
    os << "[block " << k << "] " << kind << " " << blocks[k].size << " offset "
       << offsets[k] << "\n";
    os << "cost";
    for (int i = offsets[k]; i < offsets[k + 1]; ++i) os << " " << c[i];
    os << "\n";
  }
  os << "[rows]\n";
  for (int r = 0; r < A.rows(); ++r) {
    os << "row " << r << " rhs " << b[r] << " :";
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it) {
      os << " " << it.col() << ":" << it.value();
    }
    os << "\n";
  }
}

// ----------------------------------------------------- ConicProgramBuilder

int ConicProgramBuilder::AddBlock(ConeKind kind, int size) {
  if (size <= 0) throw std::invalid_argument("cone block size must be positive");
  blocks_.push_back({kind, size});
  offsets_.push_back(total_);
  total_ += blocks_.back().dimension();
  return static_cast<int>(blocks_.size()) - 1;
}

int ConicProgramBuilder::AddRow(double rhs) {
  rhs_.push_back(rhs);
  return static_cast<int>(rhs_.size()) - 1;
}

void ConicProgramBuilder::AddCoefficient(int row, int block, int entry, double value) {
  if (blocks_[block].kind == ConeKind::PSD) {
    throw std::invalid_argument("use AddMatrixCoefficient for PSD blocks");
  }
  if (entry < 0 || entry >= blocks_[block].size) {
    throw std::out_of_range("block entry out of range");
  }
  if (value != 0.0) triplets_.emplace_back(row, offsets_[block] + entry, value);
}

void ConicProgramBuilder::AddMatrixCoefficient(int row, int block, int i, int j,
                                               double value) {
  const ConeBlock& cone = blocks_[block];
  if (cone.kind != ConeKind::PSD) throw std::invalid_argument("block is not PSD");
  if (i < 0 || j < 0 || i >= cone.size || j >= cone.size) {
    throw std::out_of_range("matrix entry out of range");
  }
  if (value == 0.0) return;
  const double scaled = (i == j) ? value : kSqrt2 * value;
  triplets_.emplace_back(row, offsets_[block] + SvecIndex(cone.size, i, j), scaled);
}

void ConicProgramBuilder::SetCost(int block, int entry, double value) {
  if (blocks_[block].kind == ConeKind::PSD) {
    throw std::invalid_argument("use SetMatrixCost for PSD blocks");
  }
  costs_.emplace_back(offsets_[block] + entry, value);
}

void ConicProgramBuilder::SetMatrixCost(int block, int i, int j, double value) {
  const ConeBlock& cone = blocks_[block];
  const double scaled = (i == j) ? value : kSqrt2 * value;
  costs_.emplace_back(offsets_[block] + SvecIndex(cone.size, i, j), scaled);
}

ConicProgram ConicProgramBuilder::Build() const {
  ConicProgram program;
  program.blocks = blocks_;
  program.c = Eigen::VectorXd::Zero(total_);
  for (const auto& [index, value] : costs_) program.c[index] += value;
  program.b = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), rhs_.size());
  program.A.resize(static_cast<int>(rhs_.size()), total_);
  program.A.setFromTriplets(triplets_.begin(), triplets_.end());
  program.A.prune(0.0);
  return program;
}

std::string ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::PrimalInfeasible: return "PrimalInfeasible";
    case SolveStatus::DualInfeasible: return "DualInfeasible";
    case SolveStatus::IterationLimit: return "IterationLimit";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

// ------------------------------------------------------------------ solver

namespace {

using SpMatR = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SpMatC = Eigen::SparseMatrix<double, Eigen::ColMajor>;

constexpr int kStallIterations = 5;
constexpr double kPivotRatio = 1e-20;

struct MatrixEntry {
  int row;
  int i;
  int j;
  double value;  // A_row(i, j) of the symmetric coefficient matrix
};

// Per-block scaling data, rebuilt every iteration.
struct BlockScaling {
  // NonNegative
  Eigen::VectorXd d;       // sqrt(x / s)
  // PSD
  Eigen::MatrixXd R;       // R^{-1} X R^{-T} = R' S R = diag(lambda)
  Eigen::MatrixXd RinvT;   // R^{-T}
  Eigen::MatrixXd P;       // R R'
  // both
  Eigen::VectorXd lambda;
};

// Scaled complementarity quantities for one block: vector for NonNegative,
// symmetric matrix for PSD.
struct BlockVector {
  Eigen::VectorXd v;
  Eigen::MatrixXd M;
};

class InteriorPoint {
 public:
  InteriorPoint(const ConicProgram& program, const SolverSettings& settings)
      : settings_(settings), blocks_(program.blocks) {
    Setup(program);
  }

  ConicSolution Run();

 private:
  void Setup(const ConicProgram& program);
  bool ComputeScaling();
  bool FactorSchur();
  void SolveReduced(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    Eigen::VectorXd* dy, Eigen::VectorXd* dxf) const;
  Eigen::VectorXd ApplyHinv(const Eigen::VectorXd& v) const;
  Eigen::VectorXd ScaledRhsToUnscaled(const std::vector<BlockVector>& rc) const;

  struct Direction {
    Eigen::VectorXd dx, dy, ds;
    double dtau = 0.0, dkappa = 0.0;
  };
  void PrepareDirections();
  Direction SolveKkt(const Eigen::VectorXd& p1, const Eigen::VectorXd& p2, double p3,
                     const Eigen::VectorXd& hp4, double p5) const;
  Direction SolveNewton(double eta, const std::vector<BlockVector>& rc, double r_tk);
  void ScaledDirections(const Direction& d, std::vector<BlockVector>* dxs,
                        std::vector<BlockVector>* dss) const;
  double MaxStep(const Direction& d, const std::vector<BlockVector>& dxs,
                 const std::vector<BlockVector>& dss) const;

  Eigen::VectorXd Residual(const Eigen::VectorXd& dual_slack_full) const;

  SolverSettings settings_;
  std::vector<ConeBlock> blocks_;
  std::vector<int> offsets_;
  int n_ = 0;
  int m_ = 0;
  int nu_ = 0;  // barrier degree

  SpMatR A_;
  SpMatC Acol_;
  Eigen::VectorXd b_, c_, row_scale_;
  std::vector<int> free_index_;  // variable indices of Free coordinates
  Eigen::MatrixXd AF_;           // m x nF
  Eigen::VectorXd cF_;
  std::vector<std::vector<MatrixEntry>> psd_entries_;  // per block
  std::vector<int> psd_blocks_;

  // iterate
  Eigen::VectorXd x_, y_, s_;
  double tau_ = 1.0, kappa_ = 1.0;

  std::vector<BlockScaling> scaling_;
  Eigen::MatrixXd kkt_;
  Eigen::VectorXd hc_, dy1_, dx1_;
  Eigen::PartialPivLU<Eigen::MatrixXd> kkt_lu_;

  // residuals of the current iterate
  Eigen::VectorXd rp_, rd_;
  double rg_ = 0.0;
};

void InteriorPoint::Setup(const ConicProgram& program) {
  offsets_ = program.BlockOffsets();
  n_ = program.num_variables();
  m_ = program.num_rows();

  // Row equilibration.
  row_scale_ = Eigen::VectorXd::Ones(m_);
  for (int r = 0; r < m_; ++r) {
    double norm = 0.0;
    for (SpMatR::InnerIterator it(program.A, r); it; ++it) {
      norm = std::max(norm, std::abs(it.value()));
    }
    if (norm > 0.0) row_scale_[r] = 1.0 / norm;
  }
  A_ = row_scale_.asDiagonal() * program.A;
  A_.makeCompressed();
  Acol_ = A_;
  b_ = row_scale_.cwiseProduct(program.b);
  c_ = program.c;

  nu_ = 0;
  psd_entries_.assign(blocks_.size(), {});
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::Free) {
      for (int i = 0; i < block.size; ++i) free_index_.push_back(offsets_[k] + i);
    } else if (block.kind == ConeKind::NonNegative) {
      nu_ += block.size;
    } else {
      nu_ += block.size;
      psd_blocks_.push_back(static_cast<int>(k));
      const int n = block.size;
      // Map svec coordinate back to (i, j).
      std::vector<std::pair<int, int>> coords(block.dimension());
      for (int j = 0; j < n; ++j)
        for (int i = j; i < n; ++i) coords[SvecIndex(n, i, j)] = {i, j};
      auto& entries = psd_entries_[k];
      for (int col = offsets_[k]; col < offsets_[k + 1]; ++col) {
        for (SpMatC::InnerIterator it(Acol_, col); it; ++it) {
          const auto [i, j] = coords[col - offsets_[k]];
          if (i == j) {
            entries.push_back({static_cast<int>(it.row()), i, i, it.value()});
          } else {
            const double a = it.value() / kSqrt2;
            entries.push_back({static_cast<int>(it.row()), i, j, a});
            entries.push_back({static_cast<int>(it.row()), j, i, a});
          }
        }
      }
      std::stable_sort(entries.begin(), entries.end(),
                       [](const MatrixEntry& a, const MatrixEntry& b) { return a.row < b.row; });
    }
  }
  const int nf = static_cast<int>(free_index_.size());
  AF_ = Eigen::MatrixXd::Zero(m_, nf);
  cF_ = Eigen::VectorXd::Zero(nf);
  for (int f = 0; f < nf; ++f) {
    for (SpMatC::InnerIterator it(Acol_, free_index_[f]); it; ++it) {
      AF_(it.row(), f) = it.value();
    }
    cF_[f] = c_[free_index_[f]];
  }

  // Standard HSD starting point.
  x_ = Eigen::VectorXd::Zero(n_);
  s_ = Eigen::VectorXd::Zero(n_);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::NonNegative) {
      x_.segment(offsets_[k], block.size).setOnes();
      s_.segment(offsets_[k], block.size).setOnes();
    } else if (block.kind == ConeKind::PSD) {
      for (int i = 0; i < block.size; ++i) {
        x_[offsets_[k] + SvecIndex(block.size, i, i)] = 1.0;
        s_[offsets_[k] + SvecIndex(block.size, i, i)] = 1.0;
      }
    }
  }
  y_ = Eigen::VectorXd::Zero(m_);
  tau_ = 1.0;
  kappa_ = 1.0;
  scaling_.resize(blocks_.size());
}

bool InteriorPoint::ComputeScaling() {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    BlockScaling& sc = scaling_[k];
    if (block.kind == ConeKind::NonNegative) {
      const auto xs = x_.segment(offsets_[k], block.size).array();
      const auto ss = s_.segment(offsets_[k], block.size).array();
      if ((xs <= 0.0).any() || (ss <= 0.0).any()) return false;
      sc.d = (xs / ss).sqrt().matrix();
      sc.lambda = (xs * ss).sqrt().matrix();
    } else if (block.kind == ConeKind::PSD) {
      const int n = block.size;
      const Eigen::MatrixXd X = Smat(x_.segment(offsets_[k], block.dimension()), n);
      const Eigen::MatrixXd S = Smat(s_.segment(offsets_[k], block.dimension()), n);
      Eigen::LLT<Eigen::MatrixXd> lx(X), ls(S);
      if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
      const Eigen::MatrixXd Lx = lx.matrixL();
      const Eigen::MatrixXd Ls = ls.matrixL();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ls.transpose() * Lx,
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
      sc.lambda = svd.singularValues();
      if ((sc.lambda.array() <= 0.0).any()) return false;
      const Eigen::VectorXd inv_sqrt = sc.lambda.array().rsqrt().matrix();
      sc.R = Lx * svd.matrixV() * inv_sqrt.asDiagonal();
      sc.RinvT = Ls * svd.matrixU() * inv_sqrt.asDiagonal();
      sc.P = sc.R * sc.R.transpose();
    }
  }
  return true;
}

bool InteriorPoint::FactorSchur() {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m_, m_);
  // NonNegative columns.
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    if (blocks_[k].kind != ConeKind::NonNegative) continue;
    const Eigen::VectorXd& d = scaling_[k].d;
    for (int e = 0; e < blocks_[k].size; ++e) {
      const double w = d[e] * d[e];
      const int col = offsets_[k] + e;
      for (SpMatC::InnerIterator i1(Acol_, col); i1; ++i1) {
        for (SpMatC::InnerIterator i2(Acol_, col); i2; ++i2) {
          if (i2.row() < i1.row()) continue;
          M(i1.row(), i2.row()) += w * i1.value() * i2.value();
        }
      }
    }
  }
  // PSD blocks: M(r, r') = sum a_ij a'_kl P(k, i) P(j, l).
  for (int k : psd_blocks_) {
    const auto& entries = psd_entries_[k];
    const Eigen::MatrixXd& P = scaling_[k].P;
    std::size_t begin1 = 0;
    while (begin1 < entries.size()) {
      std::size_t end1 = begin1;
      while (end1 < entries.size() && entries[end1].row == entries[begin1].row) ++end1;
      std::size_t begin2 = begin1;
      while (begin2 < entries.size()) {
        std::size_t end2 = begin2;
        while (end2 < entries.size() && entries[end2].row == entries[begin2].row) ++end2;
        double sum = 0.0;
        for (std::size_t p = begin1; p < end1; ++p) {
          const MatrixEntry& e1 = entries[p];
          for (std::size_t q = begin2; q < end2; ++q) {
            const MatrixEntry& e2 = entries[q];
            sum += e1.value * e2.value * P(e2.i, e1.i) * P(e1.j, e2.j);
          }
        }
        M(entries[begin1].row, entries[begin2].row) += sum;
        begin2 = end2;
      }
      begin1 = end1;
    }
  }
  M = M.selfadjointView<Eigen::Upper>();
  // Augmented system [M A_F; A_F' 0] with -delta on the free block, refined
  // against the exact matrix. M itself is shifted only when the factorization
  // breaks down: once M spans many decades, any shift tied to its largest
  // diagonal stalls the refinement.
  const int nf = static_cast<int>(AF_.cols());
  kkt_.setZero(m_ + nf, m_ + nf);
  kkt_.topLeftCorner(m_, m_) = M;
  if (nf > 0) {
    kkt_.topRightCorner(m_, nf) = AF_;
    kkt_.bottomLeftCorner(nf, m_) = AF_.transpose();
  }
  auto pivots_ok = [&] {
    const Eigen::VectorXd piv = kkt_lu_.matrixLU().diagonal().cwiseAbs();
    return piv.allFinite() && piv.minCoeff() > kPivotRatio * piv.maxCoeff();
  };
  Eigen::MatrixXd regularized = kkt_;
  regularized.diagonal().tail(nf).array() -= settings_.regularization;
  kkt_lu_.compute(regularized);
  if (pivots_ok()) return true;
  const double scale = std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
  regularized.diagonal().head(m_).array() += settings_.regularization * scale;
  kkt_lu_.compute(regularized);
  const Eigen::VectorXd piv = kkt_lu_.matrixLU().diagonal().cwiseAbs();
  return piv.allFinite() && piv.minCoeff() > 0.0;
}

void InteriorPoint::SolveReduced(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                 Eigen::VectorXd* dy, Eigen::VectorXd* dxf) const {
  const int nf = static_cast<int>(AF_.cols());
  Eigen::VectorXd rhs(m_ + nf);
  rhs.head(m_) = p;
  rhs.tail(nf) = q;
  Eigen::VectorXd sol = kkt_lu_.solve(rhs);
  double best = (rhs - kkt_ * sol).norm();
  for (int it = 0; it < 5 && best > 0.0; ++it) {
    const Eigen::VectorXd trial = sol + kkt_lu_.solve(rhs - kkt_ * sol);
    const double res = (rhs - kkt_ * trial).norm();
    if (!(res < best)) break;
    sol = trial;
    best = res;
  }
  *dy = sol.head(m_);
  *dxf = sol.tail(nf);
}

Eigen::VectorXd InteriorPoint::ApplyHinv(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::NonNegative) {
      out.segment(offsets_[k], block.size) =
          scaling_[k].d.array().square().matrix().cwiseProduct(
              v.segment(offsets_[k], block.size));
    } else if (block.kind == ConeKind::PSD) {
      const Eigen::MatrixXd V = Smat(v.segment(offsets_[k], block.dimension()), block.size);
      out.segment(offsets_[k], block.dimension()) = Svec(scaling_[k].P * V * scaling_[k].P);
    }
  }
  return out;
}

// H^{-1}(R^{-T} rc R^{-1}) = R rc R' (PSD), d * rc (NonNegative).
Eigen::VectorXd InteriorPoint::ScaledRhsToUnscaled(const std::vector<BlockVector>& rc) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::NonNegative) {
      out.segment(offsets_[k], block.size) = scaling_[k].d.cwiseProduct(rc[k].v);
    } else if (block.kind == ConeKind::PSD) {
      out.segment(offsets_[k], block.dimension()) =
          Svec(scaling_[k].R * rc[k].M * scaling_[k].R.transpose());
    }
  }
  return out;
}

void InteriorPoint::PrepareDirections() {
  const int nf = static_cast<int>(free_index_.size());
  Eigen::VectorXd cK = c_;
  for (int f = 0; f < nf; ++f) cK[free_index_[f]] = 0.0;
  hc_ = ApplyHinv(cK);
  Eigen::VectorXd dxf1;
  SolveReduced(b_ + A_ * hc_, cF_, &dy1_, &dxf1);
  dx1_ = ApplyHinv(A_.transpose() * dy1_) - hc_;
  for (int f = 0; f < nf; ++f) dx1_[free_index_[f]] = dxf1[f];
}

// Solves
//   A dx - b dtau = p1,  A'dy + ds - c dtau = p2 (ds = 0 on Free),
//   -c'dx + b'dy - dkappa = p3,  dx + H^{-1} ds = hp4 (cone part),
//   kappa dtau + tau dkappa = p5.
InteriorPoint::Direction InteriorPoint::SolveKkt(const Eigen::VectorXd& p1,
                                                 const Eigen::VectorXd& p2, double p3,
                                                 const Eigen::VectorXd& hp4, double p5) const {
  const int nf = static_cast<int>(free_index_.size());
  Eigen::VectorXd p2K = p2;
  Eigen::VectorXd p2F(nf);
  for (int f = 0; f < nf; ++f) {
    p2F[f] = p2[free_index_[f]];
    p2K[free_index_[f]] = 0.0;
  }
  const Eigen::VectorXd h0 = hp4 - ApplyHinv(p2K);
  Eigen::VectorXd dy0, dxf0;
  SolveReduced(p1 - A_ * h0, p2F, &dy0, &dxf0);
  Eigen::VectorXd dx0 = ApplyHinv(A_.transpose() * dy0) + h0;
  for (int f = 0; f < nf; ++f) dx0[free_index_[f]] = dxf0[f];

  const double denom = kappa_ + tau_ * (b_.dot(dy1_) - c_.dot(dx1_));
  const double dtau = (p5 + tau_ * (p3 + c_.dot(dx0) - b_.dot(dy0))) / denom;
  Direction d;
  d.dx = dx0 + dtau * dx1_;
  d.dy = dy0 + dtau * dy1_;
  d.dtau = dtau;
  d.dkappa = -p3 - c_.dot(d.dx) + b_.dot(d.dy);
  d.ds = p2 - A_.transpose() * d.dy + c_ * dtau;
  for (int f = 0; f < nf; ++f) d.ds[free_index_[f]] = 0.0;
  return d;
}

InteriorPoint::Direction InteriorPoint::SolveNewton(double eta,
                                                    const std::vector<BlockVector>& rc,
                                                    double r_tk) {
  const int nf = static_cast<int>(free_index_.size());
  const Eigen::VectorXd p1 = eta * rp_;
  const Eigen::VectorXd p2 = eta * rd_;
  const double p3 = eta * rg_;
  const Eigen::VectorXd hp4 = ScaledRhsToUnscaled(rc);
  Direction d = SolveKkt(p1, p2, p3, hp4, r_tk);

  // Iterative refinement on the full Newton system.
  auto residual_norm = [&](const Direction& dd, Eigen::VectorXd* e1, Eigen::VectorXd* e2,
                           double* e3, Eigen::VectorXd* e4, double* e5) {
    *e1 = p1 - (A_ * dd.dx - b_ * dd.dtau);
    *e2 = p2 - (A_.transpose() * dd.dy + dd.ds - c_ * dd.dtau);
    *e3 = p3 - (-c_.dot(dd.dx) + b_.dot(dd.dy) - dd.dkappa);
    *e4 = hp4 - dd.dx - ApplyHinv(dd.ds);
    for (int f = 0; f < nf; ++f) (*e4)[free_index_[f]] = 0.0;
    *e5 = r_tk - (kappa_ * dd.dtau + tau_ * dd.dkappa);
    return e1->norm() + e2->norm() + std::abs(*e3) + std::abs(*e5);
  };
  Eigen::VectorXd e1, e2, e4;
  double e3 = 0.0, e5 = 0.0;
  double best = residual_norm(d, &e1, &e2, &e3, &e4, &e5);
  for (int it = 0; it < 3; ++it) {
    const Direction corr = SolveKkt(e1, e2, e3, e4, e5);
    Direction trial = d;
    trial.dx += corr.dx;
    trial.dy += corr.dy;
    trial.ds += corr.ds;
    trial.dtau += corr.dtau;
    trial.dkappa += corr.dkappa;
    Eigen::VectorXd f1, f2, f4;
    double f3 = 0.0, f5 = 0.0;
    const double res = residual_norm(trial, &f1, &f2, &f3, &f4, &f5);
    if (!(res < best)) break;
    d = std::move(trial);
    best = res;
    e1 = std::move(f1);
    e2 = std::move(f2);
    e3 = f3;
    e4 = std::move(f4);
    e5 = f5;
  }
  return d;
}

void InteriorPoint::ScaledDirections(const Direction& d, std::vector<BlockVector>* dxs,
                                     std::vector<BlockVector>* dss) const {
  dxs->assign(blocks_.size(), {});
  dss->assign(blocks_.size(), {});
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::NonNegative) {
      (*dxs)[k].v = d.dx.segment(offsets_[k], block.size).cwiseQuotient(scaling_[k].d);
      (*dss)[k].v = d.ds.segment(offsets_[k], block.size).cwiseProduct(scaling_[k].d);
    } else if (block.kind == ConeKind::PSD) {
      const int n = block.size;
      const Eigen::MatrixXd dX = Smat(d.dx.segment(offsets_[k], block.dimension()), n);
      const Eigen::MatrixXd dS = Smat(d.ds.segment(offsets_[k], block.dimension()), n);
      const Eigen::MatrixXd Rinv = scaling_[k].RinvT.transpose();
      (*dxs)[k].M = Rinv * dX * scaling_[k].RinvT;
      (*dss)[k].M = scaling_[k].R.transpose() * dS * scaling_[k].R;
    }
  }
}

double InteriorPoint::MaxStep(const Direction& d, const std::vector<BlockVector>& dxs,
                              const std::vector<BlockVector>& dss) const {
  double alpha = std::numeric_limits<double>::infinity();
  auto limit = [&](double value, double delta) {
    if (delta < 0.0) alpha = std::min(alpha, -value / delta);
  };
  limit(tau_, d.dtau);
  limit(kappa_, d.dkappa);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const ConeBlock& block = blocks_[k];
    if (block.kind == ConeKind::NonNegative) {
      for (int e = 0; e < block.size; ++e) {
        limit(x_[offsets_[k] + e], d.dx[offsets_[k] + e]);
        limit(s_[offsets_[k] + e], d.ds[offsets_[k] + e]);
      }
    } else if (block.kind == ConeKind::PSD) {
      const Eigen::VectorXd inv_sqrt = scaling_[k].lambda.array().rsqrt().matrix();
      for (const Eigen::MatrixXd* D : {&dxs[k].M, &dss[k].M}) {
        Eigen::MatrixXd T = inv_sqrt.asDiagonal() * (*D) * inv_sqrt.asDiagonal();
        T = 0.5 * (T + T.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
        const double e = es.eigenvalues()[0];
        if (e < 0.0) alpha = std::min(alpha, -1.0 / e);
      }
    }
  }
  return alpha;
}

ConicSolution InteriorPoint::Run() {
  ConicSolution out;
  const int nf = static_cast<int>(free_index_.size());
  const double bnorm = std::max(1.0, b_.norm());
  const double cnorm = std::max(1.0, c_.norm());

  auto finish = [&](SolveStatus status, int iterations) {
    out.status = status;
    out.iterations = iterations;
    double scale = 1.0;
    if (status == SolveStatus::Optimal || status == SolveStatus::IterationLimit ||
        status == SolveStatus::NumericalFailure) {
      scale = 1.0 / tau_;
    } else if (status == SolveStatus::PrimalInfeasible) {
      scale = 1.0 / b_.dot(y_);
    } else {
      scale = -1.0 / c_.dot(x_);
    }
    out.x = x_ * scale;
    out.s = s_ * scale;
    out.y = row_scale_.cwiseProduct(y_) * scale;
    out.primal_objective = c_.dot(out.x);
    out.dual_objective = b_.dot(y_ * scale);
    out.relative_gap = std::abs(out.primal_objective - out.dual_objective) /
                       (1.0 + std::abs(out.primal_objective) + std::abs(out.dual_objective));
    out.primal_residual = (A_ * out.x - b_).cwiseQuotient(row_scale_).lpNorm<Eigen::Infinity>();
    out.dual_residual = (c_ - A_.transpose() * (y_ * scale) - out.s).lpNorm<Eigen::Infinity>();
    out.complementarity = out.x.dot(out.s);
    return out;
  };

  // Best iterate by the worst of the three scaled residuals. Near the end the
  // scaling is so ill-conditioned that rounding can push the residuals back up;
  // the loop then stops and reports the best point seen.
  struct Snapshot {
    Eigen::VectorXd x, y, s;
    double tau = 1.0, kappa = 1.0;
  } best;
  double best_merit = std::numeric_limits<double>::infinity();
  int since_best = 0;
  auto restore_best = [&] {
    if (!std::isfinite(best_merit)) return;
    x_ = best.x;
    y_ = best.y;
    s_ = best.s;
    tau_ = best.tau;
    kappa_ = best.kappa;
  };
  auto fail = [&](SolveStatus status, int iter) {
    restore_best();
    return finish(status, iter);
  };

  for (int iter = 0; iter < settings_.max_iterations; ++iter) {
    rp_ = b_ * tau_ - A_ * x_;
    rd_ = c_ * tau_ - A_.transpose() * y_ - s_;
    rg_ = kappa_ + c_.dot(x_) - b_.dot(y_);
    const double mu = (x_.dot(s_) + tau_ * kappa_) / (nu_ + 1);

    const double pres = rp_.norm() / tau_ / bnorm;
    const double dres = rd_.norm() / tau_ / cnorm;
    const double pobj = c_.dot(x_) / tau_;
    const double dobj = b_.dot(y_) / tau_;
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    if (settings_.verbose) {
      std::cerr << "iter " << iter << " pobj " << pobj << " dobj " << dobj << " pres "
                << pres << " dres " << dres << " gap " << relgap << " tau " << tau_
                << " kappa " << kappa_ << " mu " << mu << "\n";
    }
    if (pres <= settings_.feasibility_tolerance && dres <= settings_.feasibility_tolerance &&
        relgap <= settings_.gap_tolerance) {
      return finish(SolveStatus::Optimal, iter);
    }
    const double merit = std::max({pres / settings_.feasibility_tolerance,
                                   dres / settings_.feasibility_tolerance,
                                   relgap / settings_.gap_tolerance});
    if (merit < best_merit) {
      best_merit = merit;
      best = {x_, y_, s_, tau_, kappa_};
      since_best = 0;
    } else if (kappa_ < tau_ && ++since_best >= kStallIterations) {
      // kappa < tau: heading for optimality, not building an infeasibility ray.
      return fail(SolveStatus::NumericalFailure, iter);
    }
    const double by = b_.dot(y_);
    if (by > 0.0) {
      Eigen::VectorXd ray = A_.transpose() * y_ + s_;
      if (ray.norm() / by <= settings_.feasibility_tolerance) {
        return finish(SolveStatus::PrimalInfeasible, iter);
      }
    }
    const double cx = c_.dot(x_);
    if (cx < 0.0 && (A_ * x_).norm() / -cx <= settings_.feasibility_tolerance) {
      return finish(SolveStatus::DualInfeasible, iter);
    }

    if (!ComputeScaling() || !FactorSchur()) {
      return fail(SolveStatus::NumericalFailure, iter);
    }
    PrepareDirections();

    // Predictor.
    std::vector<BlockVector> rc(blocks_.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      if (blocks_[k].kind == ConeKind::NonNegative) {
        rc[k].v = -scaling_[k].lambda;
      } else if (blocks_[k].kind == ConeKind::PSD) {
        rc[k].M = -Eigen::MatrixXd(scaling_[k].lambda.asDiagonal());
      }
    }
    Direction aff = SolveNewton(1.0, rc, -tau_ * kappa_);
    std::vector<BlockVector> dxa, dsa;
    ScaledDirections(aff, &dxa, &dsa);
    const double alpha_aff = std::min(1.0, MaxStep(aff, dxa, dsa));
    const double sigma = std::pow(1.0 - alpha_aff, 3);

    // Corrector with Mehrotra second-order term.
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const Eigen::VectorXd& lam = scaling_[k].lambda;
      if (blocks_[k].kind == ConeKind::NonNegative) {
        const Eigen::ArrayXd rhs = -lam.array().square() + sigma * mu -
                                   dxa[k].v.array() * dsa[k].v.array();
        rc[k].v = (rhs / lam.array()).matrix();
      } else if (blocks_[k].kind == ConeKind::PSD) {
        const int n = blocks_[k].size;
        Eigen::MatrixXd rhs = -0.5 * (dxa[k].M * dsa[k].M + dsa[k].M * dxa[k].M);
        for (int i = 0; i < n; ++i) rhs(i, i) += sigma * mu - lam[i] * lam[i];
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) rhs(i, j) *= 2.0 / (lam[i] + lam[j]);
        rc[k].M = rhs;
      }
    }
    const double r_tk = sigma * mu - tau_ * kappa_ - aff.dtau * aff.dkappa;
    Direction dir = SolveNewton(1.0 - sigma, rc, r_tk);
    std::vector<BlockVector> dxs, dss;
    ScaledDirections(dir, &dxs, &dss);
    const double alpha_max = MaxStep(dir, dxs, dss);
    const double alpha = std::min(1.0, 0.99 * alpha_max);
    if (!(alpha > 1e-12) || !std::isfinite(dir.dtau)) {
      return fail(SolveStatus::NumericalFailure, iter);
    }
    x_ += alpha * dir.dx;
    y_ += alpha * dir.dy;
    s_ += alpha * dir.ds;
    tau_ += alpha * dir.dtau;
    kappa_ += alpha * dir.dkappa;
    for (int f = 0; f < nf; ++f) s_[free_index_[f]] = 0.0;
  }
  return fail(SolveStatus::IterationLimit, settings_.max_iterations);
}

}  // namespace

ConicSolution Solve(const ConicProgram& program, const SolverSettings& settings) {
  program.Validate();
  InteriorPoint ipm(program, settings);
  return ipm.Run();
}

ResidualReport Verify(const ConicProgram& program, const ConicSolution& solution) {
  ResidualReport report;
  const auto offsets = program.BlockOffsets();
  if (solution.x.size() != program.num_variables() || solution.y.size() != program.num_rows()) {
    throw std::invalid_argument("solution dimensions do not match the program");
  }
  report.primal_residual = (program.A * solution.x - program.b).lpNorm<Eigen::Infinity>();
  Eigen::VectorXd s = solution.s.size() == program.num_variables()
                          ? solution.s
                          : Eigen::VectorXd(program.c - program.A.transpose() * solution.y);
  report.dual_residual =
      (program.c - program.A.transpose() * solution.y - s).lpNorm<Eigen::Infinity>();
  double pmargin = std::numeric_limits<double>::infinity();
  double dmargin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < program.blocks.size(); ++k) {
    const ConeBlock& block = program.blocks[k];
    if (block.kind == ConeKind::Free) {
      // Dual slack must vanish on free coordinates.
      const double worst = s.segment(offsets[k], block.size).lpNorm<Eigen::Infinity>();
      report.dual_residual = std::max(report.dual_residual, worst);
    } else if (block.kind == ConeKind::NonNegative) {
      pmargin = std::min(pmargin, solution.x.segment(offsets[k], block.size).minCoeff());
      dmargin = std::min(dmargin, s.segment(offsets[k], block.size).minCoeff());
    } else {
      const int n = block.size;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ex(
          Smat(solution.x.segment(offsets[k], block.dimension()), n), Eigen::EigenvaluesOnly);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          Smat(s.segment(offsets[k], block.dimension()), n), Eigen::EigenvaluesOnly);
      pmargin = std::min(pmargin, ex.eigenvalues()[0]);
      dmargin = std::min(dmargin, es.eigenvalues()[0]);
    }
  }
  report.primal_cone_margin = std::isfinite(pmargin) ? pmargin : 0.0;
  report.dual_cone_margin = std::isfinite(dmargin) ? dmargin : 0.0;
  report.gap = std::abs(program.c.dot(solution.x) - program.b.dot(solution.y));
  report.complementarity = solution.x.dot(s);
  return report;
}

}  // namespace mddp

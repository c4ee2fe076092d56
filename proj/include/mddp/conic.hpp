#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mddp {

enum class ConeKind { Free, NonNegative, PSD };

/// One block of the cone layout. For PSD blocks `size` is the matrix order
/// and the block occupies size*(size+1)/2 scaled-svec coordinates.
struct ConeBlock {
  ConeKind kind = ConeKind::Free;
  int size = 0;

  int dimension() const {
    return kind == ConeKind::PSD ? size * (size + 1) / 2 : size;
  }
};

/// Position of matrix entry (i, j) inside a PSD block's svec coordinates
/// (lower triangle, column major).
int SvecIndex(int n, int i, int j);
/// svec(X) with off-diagonal entries scaled by sqrt(2).
Eigen::VectorXd Svec(const Eigen::MatrixXd& X);
Eigen::MatrixXd Smat(const Eigen::Ref<const Eigen::VectorXd>& v, int n);

/// Standard-form linear-conic program
///
///   minimize    c'x
///   subject to  A x = b,  x in K = K_1 x ... x K_p
///
/// with dual   maximize b'y  subject to  c - A'y = s,  s in K*
/// (s = 0 on Free blocks). All cones in the layout are self-dual.
struct ConicProgram {
  std::vector<ConeBlock> blocks;
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;
  Eigen::VectorXd b;

  int num_variables() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(b.size()); }
  std::vector<int> BlockOffsets() const;

  /// Throws std::invalid_argument if the dimensions disagree or A has an
  /// all-zero row.
  void Validate() const;

  /// Human-readable dump: one section per block and one line per row.
  void WriteDebugDump(std::ostream& os) const;
};

/// Incremental assembly of a ConicProgram.
class ConicProgramBuilder {
 public:
  /// Returns the block index.
  int AddBlock(ConeKind kind, int size);
  /// Returns the row index.
  int AddRow(double rhs);

  int num_rows() const { return static_cast<int>(rhs_.size()); }
  const ConeBlock& block(int index) const { return blocks_[index]; }

  /// Adds `value` to A(row, variable) for a scalar entry of a Free or
  /// NonNegative block.
  void AddCoefficient(int row, int block, int entry, double value);
  /// Row `row` gets the term <Sym, X> with Sym(i,j) = Sym(j,i) = value for the
  /// PSD block's matrix variable X.
  void AddMatrixCoefficient(int row, int block, int i, int j, double value);

  void SetCost(int block, int entry, double value);
  /// Cost term <C, X> with C(i,j) = C(j,i) = value.
  void SetMatrixCost(int block, int i, int j, double value);
  void SetRhs(int row, double value) { rhs_[row] = value; }

  int Offset(int block) const { return offsets_[block]; }
  int num_variables() const { return total_; }

  ConicProgram Build() const;

 private:
  std::vector<ConeBlock> blocks_;
  std::vector<int> offsets_;
  int total_ = 0;
  std::vector<double> rhs_;
  std::vector<Eigen::Triplet<double>> triplets_;
  std::vector<std::pair<int, double>> costs_;
};

enum class SolveStatus {
  Optimal,
  PrimalInfeasible,
  DualInfeasible,
  IterationLimit,
  NumericalFailure
};

std::string ToString(SolveStatus status);

struct SolverSettings {
  double gap_tolerance = 1e-8;
  double feasibility_tolerance = 1e-8;
  int max_iterations = 200;
  double regularization = 1e-10;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  /// Primal point (or dual-infeasibility ray).
  Eigen::VectorXd x;
  /// Equality multipliers (or primal-infeasibility certificate).
  Eigen::VectorXd y;
  /// Dual slack c - A'y.
  Eigen::VectorXd s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  /// |c'x - b'y| / (1 + |c'x| + |b'y|)
  double relative_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  int iterations = 0;
};

ConicSolution Solve(const ConicProgram& program,
                    const SolverSettings& settings = {});

/// Recomputed from scratch, without solver internals.
struct ResidualReport {
  double primal_residual = 0.0;        // ||Ax - b||_inf
  double dual_residual = 0.0;          // ||c - A'y - s||_inf, Free part of s included
  double primal_cone_margin = 0.0;     // min over blocks: min eigenvalue / entry of x
  double dual_cone_margin = 0.0;       // same for s
  double gap = 0.0;                    // |c'x - b'y|
  double complementarity = 0.0;        // x's
};

ResidualReport Verify(const ConicProgram& program, const ConicSolution& solution);

}  // namespace mddp

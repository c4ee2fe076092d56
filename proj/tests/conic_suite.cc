#include "conic_suite.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

namespace mddp::testing {

namespace {

Eigen::MatrixXd RandomSymmetric(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = n01(gen);
  return 0.5 * (C + C.transpose().eval());
}

Eigen::VectorXd Eigenvalues(const Eigen::MatrixXd& C) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C).eigenvalues();
}

void SetMatrixCost(ConicProgramBuilder& b, int blk, const Eigen::MatrixXd& C) {
  for (int j = 0; j < C.rows(); ++j)
    for (int i = j; i < C.rows(); ++i) b.SetMatrixCost(blk, i, j, C(i, j));
}

// min <C, X> s.t. tr X = scale, X psd.
ConicProgram Trace(const Eigen::MatrixXd& C, double scale = 1.0) {
  const int n = static_cast<int>(C.rows());
  ConicProgramBuilder b;
  const int blk = b.AddBlock(ConeKind::PSD, n);
  const int row = b.AddRow(scale);
  for (int i = 0; i < n; ++i) b.AddMatrixCoefficient(row, blk, i, i, 1.0);
  SetMatrixCost(b, blk, C);
  return b.Build();
}

// LP: min c'x, A x = b, x >= 0 with dense rows.
ConicProgram Lp(const std::vector<double>& c, const std::vector<std::vector<double>>& A,
                const std::vector<double>& rhs) {
  ConicProgramBuilder b;
  const int blk = b.AddBlock(ConeKind::NonNegative, static_cast<int>(c.size()));
  for (std::size_t r = 0; r < A.size(); ++r) {
    const int row = b.AddRow(rhs[r]);
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (A[r][j] != 0.0) b.AddCoefficient(row, blk, static_cast<int>(j), A[r][j]);
    }
  }
  for (std::size_t j = 0; j < c.size(); ++j) b.SetCost(blk, static_cast<int>(j), c[j]);
  return b.Build();
}

// Largest gamma with p - gamma a sum of squares, p univariate with
// coefficients p[0..2d]. The program minimizes -gamma.
ConicProgram UnivariateSosBound(const std::vector<double>& p) {
  const int d = static_cast<int>(p.size() - 1) / 2;
  ConicProgramBuilder b;
  const int gamma = b.AddBlock(ConeKind::Free, 1);
  const int gram = b.AddBlock(ConeKind::PSD, d + 1);
  for (int k = 0; k <= 2 * d; ++k) {
    const int row = b.AddRow(p[k]);
    for (int i = 0; i <= d; ++i) {
      const int j = k - i;
      if (j < i || j > d) continue;
      // The symmetric coefficient counts G_ij and G_ji.
      b.AddMatrixCoefficient(row, gram, j, i, 1.0);
    }
    if (k == 0) b.AddCoefficient(row, gamma, 0, 1.0);
  }
  b.SetCost(gamma, 0, -1.0);
  return b.Build();
}

}  // namespace

std::vector<ConicCase> FeasibleConicCases() {
  std::vector<ConicCase> out;
  auto add = [&](std::string name, ConicProgram p, double opt) {
    out.push_back({std::move(name), std::move(p), SolveStatus::Optimal, opt});
  };

  add("lp_single_equality", Lp({1.0}, {{1.0}}, {2.0}), 2.0);
  add("lp_two_variable_simplex", Lp({1.0, 2.0}, {{1.0, 1.0}}, {1.0}), 1.0);
  // max x1 + x2 s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6; vertex (1.6, 1.2).
  add("lp_polytope_vertex",
      Lp({-1.0, -1.0, 0.0, 0.0}, {{1.0, 2.0, 1.0, 0.0}, {3.0, 1.0, 0.0, 1.0}}, {4.0, 6.0}),
      -2.8);
  add("lp_simplex_minimum", Lp({3.0, 1.0, 2.0, 5.0}, {{1.0, 1.0, 1.0, 1.0}}, {1.0}), 1.0);
  add("lp_degenerate_face",
      Lp({1.0, 1.0, 0.0}, {{1.0, 1.0, 1.0}, {1.0, -1.0, 0.0}}, {1.0, 0.0}), 0.0);
  {
    // min t with t free and t - s_i = a_i, s >= 0: t = max a_i.
    const std::vector<double> a = {1.0, -3.0, 2.5};
    ConicProgramBuilder b;
    const int t = b.AddBlock(ConeKind::Free, 1);
    const int s = b.AddBlock(ConeKind::NonNegative, 3);
    for (int i = 0; i < 3; ++i) {
      const int row = b.AddRow(a[i]);
      b.AddCoefficient(row, t, 0, 1.0);
      b.AddCoefficient(row, s, i, -1.0);
    }
    b.SetCost(t, 0, 1.0);
    add("lp_free_epigraph_of_max", b.Build(), 2.5);
  }

  for (int n : {2, 3, 5, 8}) {
    const Eigen::MatrixXd C = RandomSymmetric(n, 100 + n);
    add("sdp_min_eigenvalue_" + std::to_string(n), Trace(C), Eigenvalues(C)[0]);
  }
  {
    const Eigen::MatrixXd C = RandomSymmetric(4, 7);
    add("sdp_max_eigenvalue_4", Trace(-C), -Eigenvalues(C)[3]);
  }
  {
    // Ky Fan: min <C, X> over tr X = 2, 0 <= X <= I is the sum of the two
    // smallest eigenvalues.
    const int n = 4;
    const Eigen::MatrixXd C = RandomSymmetric(n, 11);
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, n);
    const int S = b.AddBlock(ConeKind::PSD, n);
    for (int j = 0; j < n; ++j) {
      for (int i = j; i < n; ++i) {
        const int row = b.AddRow(i == j ? 1.0 : 0.0);
        const double w = i == j ? 1.0 : 0.5;  // symmetric coefficient counts both entries
        b.AddMatrixCoefficient(row, X, i, j, w);
        b.AddMatrixCoefficient(row, S, i, j, w);
      }
    }
    const int tr = b.AddRow(2.0);
    for (int i = 0; i < n; ++i) b.AddMatrixCoefficient(tr, X, i, i, 1.0);
    SetMatrixCost(b, X, C);
    const Eigen::VectorXd ev = Eigenvalues(C);
    add("sdp_ky_fan_two_smallest", b.Build(), ev[0] + ev[1]);
  }
  {
    // Theta number of the 5-cycle is sqrt(5).
    const int n = 5;
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, n);
    const int tr = b.AddRow(1.0);
    for (int i = 0; i < n; ++i) b.AddMatrixCoefficient(tr, X, i, i, 1.0);
    for (int i = 0; i < n; ++i) {
      const int row = b.AddRow(0.0);
      b.AddMatrixCoefficient(row, X, std::max(i, (i + 1) % n), std::min(i, (i + 1) % n), 1.0);
    }
    SetMatrixCost(b, X, -Eigen::MatrixXd::Ones(n, n));
    add("sdp_theta_of_c5", b.Build(), -std::sqrt(5.0));
  }
  {
    // min sum X_ij with unit diagonal; X = 1.5 (I - J/3) attains 0.
    const int n = 3;
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, n);
    for (int i = 0; i < n; ++i) b.AddMatrixCoefficient(b.AddRow(1.0), X, i, i, 1.0);
    SetMatrixCost(b, X, Eigen::MatrixXd::Ones(n, n));
    add("sdp_unit_diagonal_all_ones", b.Build(), 0.0);
  }
  {
    // min t s.t. [t 1; 1 1] psd.
    ConicProgramBuilder b;
    const int t = b.AddBlock(ConeKind::Free, 1);
    const int Z = b.AddBlock(ConeKind::PSD, 2);
    int r = b.AddRow(0.0);
    b.AddMatrixCoefficient(r, Z, 0, 0, 1.0);
    b.AddCoefficient(r, t, 0, -1.0);
    b.AddMatrixCoefficient(b.AddRow(1.0), Z, 1, 0, 0.5);
    b.AddMatrixCoefficient(b.AddRow(1.0), Z, 1, 1, 1.0);
    b.SetCost(t, 0, 1.0);
    add("sdp_free_scalar_schur", b.Build(), 1.0);
  }
  {
    // min t s.t. [t v'; v I] psd gives t = |v|^2.
    const std::vector<double> v = {1.0, 2.0};
    ConicProgramBuilder b;
    const int t = b.AddBlock(ConeKind::Free, 1);
    const int Z = b.AddBlock(ConeKind::PSD, 3);
    int r = b.AddRow(0.0);
    b.AddMatrixCoefficient(r, Z, 0, 0, 1.0);
    b.AddCoefficient(r, t, 0, -1.0);
    for (int i = 1; i <= 2; ++i) b.AddMatrixCoefficient(b.AddRow(v[i - 1]), Z, i, 0, 0.5);
    b.AddMatrixCoefficient(b.AddRow(1.0), Z, 1, 1, 1.0);
    b.AddMatrixCoefficient(b.AddRow(0.0), Z, 2, 1, 0.5);
    b.AddMatrixCoefficient(b.AddRow(1.0), Z, 2, 2, 1.0);
    b.SetCost(t, 0, 1.0);
    add("sdp_schur_norm_squared", b.Build(), 5.0);
  }
  {
    // min x + <C, X> with x + tr X = 1: min(1, lambda_min(C)) = 1 here.
    ConicProgramBuilder b;
    const int x = b.AddBlock(ConeKind::NonNegative, 1);
    const int X = b.AddBlock(ConeKind::PSD, 2);
    const int r = b.AddRow(1.0);
    b.AddCoefficient(r, x, 0, 1.0);
    b.AddMatrixCoefficient(r, X, 0, 0, 1.0);
    b.AddMatrixCoefficient(r, X, 1, 1, 1.0);
    b.SetCost(x, 0, 1.0);
    SetMatrixCost(b, X, Eigen::Vector2d(2.0, 3.0).asDiagonal());
    add("mixed_lp_sdp_budget", b.Build(), 1.0);
  }
  {
    const Eigen::MatrixXd C1 = RandomSymmetric(3, 21), C2 = RandomSymmetric(2, 22);
    ConicProgramBuilder b;
    const int X1 = b.AddBlock(ConeKind::PSD, 3);
    const int X2 = b.AddBlock(ConeKind::PSD, 2);
    const int r1 = b.AddRow(1.0);
    for (int i = 0; i < 3; ++i) b.AddMatrixCoefficient(r1, X1, i, i, 1.0);
    const int r2 = b.AddRow(2.0);
    for (int i = 0; i < 2; ++i) b.AddMatrixCoefficient(r2, X2, i, i, 1.0);
    SetMatrixCost(b, X1, C1);
    SetMatrixCost(b, X2, C2);
    add("sdp_two_blocks", b.Build(), Eigenvalues(C1)[0] + 2.0 * Eigenvalues(C2)[0]);
  }
  // x^2 - 2x + 3 >= 2; x^4 - 3x^2 + 1 >= -1.25.
  add("sos_univariate_quadratic", UnivariateSosBound({3.0, -2.0, 1.0}), -2.0);
  add("sos_univariate_quartic", UnivariateSosBound({1.0, 0.0, -3.0, 0.0, 1.0}), 1.25);
  return out;
}

std::vector<ConicCase> InfeasibleConicCases() {
  std::vector<ConicCase> out;
  {
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, 1);
    b.AddMatrixCoefficient(b.AddRow(-1.0), X, 0, 0, 1.0);
    out.push_back({"psd_scalar_negative", b.Build(), SolveStatus::PrimalInfeasible});
  }
  out.push_back({"lp_negative_sum", Lp({1.0, 1.0}, {{1.0, 1.0}}, {-1.0}),
                 SolveStatus::PrimalInfeasible});
  {
    // X00 + X11 = 1 and X01 = 1 would need X00 X11 >= 1.
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, 2);
    const int r = b.AddRow(1.0);
    b.AddMatrixCoefficient(r, X, 0, 0, 1.0);
    b.AddMatrixCoefficient(r, X, 1, 1, 1.0);
    b.AddMatrixCoefficient(b.AddRow(1.0), X, 1, 0, 0.5);
    out.push_back({"psd_off_diagonal_too_large", b.Build(), SolveStatus::PrimalInfeasible});
  }
  out.push_back({"lp_unbounded_ray", Lp({-1.0, 0.0}, {{1.0, -1.0}}, {0.0}),
                 SolveStatus::DualInfeasible});
  {
    // min -X00 s.t. X11 = 1 is unbounded.
    ConicProgramBuilder b;
    const int X = b.AddBlock(ConeKind::PSD, 2);
    b.AddMatrixCoefficient(b.AddRow(1.0), X, 1, 1, 1.0);
    b.SetMatrixCost(X, 0, 0, -1.0);
    out.push_back({"psd_unbounded_diagonal", b.Build(), SolveStatus::DualInfeasible});
  }
  return out;
}

}  // namespace mddp::testing

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "panelcrypt/core/error.hpp"

namespace panelcrypt::linalg {

// Rank decisions compare |R_jj| against this fraction of the largest |R_jj|.
inline constexpr double kRankTolerance = 1e-10;

struct LeastSquares {
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtx_inv;
  Eigen::VectorXd residuals;
  double ssr = 0.0;
};

// Names the columns that take part in one exact linear dependency of X.
inline std::vector<std::string> dependent_columns(
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr, const std::vector<std::string>& names) {
  const Eigen::Index k = qr.cols();
  const Eigen::Index r = qr.rank();
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(std::min(qr.rows(), k), k)
                                .template triangularView<Eigen::Upper>();
  // Null vector in pivoted coordinates: [-R11^{-1} R12 e_1 ; e_1].
  Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
  z(r) = 1.0;
  if (r > 0) {
    const Eigen::VectorXd rhs = R.block(0, r, r, 1);
    z.head(r) = -R.topLeftCorner(r, r).template triangularView<Eigen::Upper>().solve(rhs);
  }
  const Eigen::VectorXd v = qr.colsPermutation() * z;
  const double vmax = v.cwiseAbs().maxCoeff();
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (std::abs(v(j)) > 1e-8 * vmax) {
      out.push_back(j < static_cast<Eigen::Index>(names.size()) ? names[j]
                                                                : "column " + std::to_string(j));
    }
  }
  return out;
}

// Ordinary least squares through a column-pivoted QR. Throws
// RankDeficiencyError naming the columns of a dependency when X is not of full
// column rank.
inline LeastSquares least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const std::vector<std::string>& names = {}) {
  const Eigen::Index n = X.rows(), k = X.cols();
  if (y.size() != n) throw DomainError("least_squares: response length does not match rows");
  if (n < k) throw DomainError("least_squares: fewer rows than columns");
  LeastSquares out;
  if (k == 0) {
    out.beta = Eigen::VectorXd(0);
    out.xtx_inv = Eigen::MatrixXd(0, 0);
    out.residuals = y;
    out.ssr = y.squaredNorm();
    return out;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(kRankTolerance);
  // Eigen's threshold is relative to the largest pivot, matching our rule.
  if (qr.rank() < k) {
    auto cols = dependent_columns(qr, names);
    std::string msg = "design matrix is rank deficient; dependent columns:";
    for (const auto& c : cols) msg += " " + c;
    throw RankDeficiencyError(msg, std::move(cols));
  }
  out.beta = qr.solve(y);
  const Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
  const auto& P = qr.colsPermutation();
  out.xtx_inv = P * inner * P.transpose();
  out.residuals = y - X * out.beta;
  out.ssr = out.residuals.squaredNorm();
  return out;
}

// Moore-Penrose inverse of a symmetric matrix. Eigenvalues with magnitude
// below rel_tol times the largest are treated as zero.
inline Eigen::MatrixXd pseudo_inverse_symmetric(const Eigen::MatrixXd& A, double rel_tol = 1e-10,
                                                int* rank = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double emax = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  int r = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i)) > rel_tol * emax && emax > 0.0) {
      inv(i) = 1.0 / ev(i);
      ++r;
    }
  }
  if (rank) *rank = r;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

}  // namespace panelcrypt::linalg

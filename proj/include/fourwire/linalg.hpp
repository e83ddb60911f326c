#pragma once

// Dense symmetric indefinite factorization (Bunch-Kaufman LDL^T) with
// inertia, backed by LAPACK.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

namespace fourwire::linalg {

struct Inertia {
  int positive = 0, negative = 0, zero = 0;
};

class LdlFactor {
 public:
  /// Factors the lower triangle of k. Pivots with magnitude below
  /// zero_tol * max|k| are counted as zero eigenvalues; with absolute set
  /// the threshold is zero_tol itself.
  explicit LdlFactor(const Eigen::MatrixXd& k, double zero_tol = 1e-13, bool absolute = false)
      : n_(static_cast<lapack_int>(k.rows())), a_(k), ipiv_(static_cast<std::size_t>(n_)) {
    if (k.rows() != k.cols()) throw std::invalid_argument("LdlFactor: matrix must be square");
    if (n_ == 0) return;
    const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
    info_ = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n_, a_.data(), n_, ipiv_.data());
    if (info_ < 0) throw std::runtime_error("dsytrf: illegal argument");
    const double tol = absolute ? zero_tol : zero_tol * scale;
    for (lapack_int i = 0; i < n_; ++i) {
      if (ipiv_[i] > 0) {
        count(a_(i, i), tol);
      } else {
        const double x = a_(i, i), y = a_(i + 1, i), z = a_(i + 1, i + 1);
        const double det = x * z - y * y;
        // eigenvalues of the 2x2 block: product det, sum trace
        if (std::abs(det) <= tol * tol) {
          ++in_.zero;
          count(x + z, tol);
        } else if (det < 0.0) {
          ++in_.positive;
          ++in_.negative;
        } else if (x + z > 0.0) {
          in_.positive += 2;
        } else {
          in_.negative += 2;
        }
        ++i;
      }
    }
  }

  const Inertia& inertia() const { return in_; }
  bool singular() const { return info_ > 0 || in_.zero > 0; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (info_ > 0) throw std::runtime_error("LdlFactor: exactly singular factor");
    Eigen::VectorXd x = b;
    if (n_ == 0) return x;
    const lapack_int info = LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n_, 1, a_.data(), n_, ipiv_.data(), x.data(), n_);
    if (info != 0) throw std::runtime_error("dsytrs failed");
    return x;
  }

 private:
  void count(double d, double tol) {
    if (std::abs(d) <= tol)
      ++in_.zero;
    else if (d > 0.0)
      ++in_.positive;
    else
      ++in_.negative;
  }

  lapack_int n_;
  Eigen::MatrixXd a_;
  std::vector<lapack_int> ipiv_;
  lapack_int info_ = 0;
  Inertia in_;
};

}  // namespace fourwire::linalg

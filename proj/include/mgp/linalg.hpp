#ifndef MGP_LINALG_HPP
#define MGP_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "mgp/common.hpp"

namespace mgp {

inline constexpr double kLog2Pi = 1.8378770664093454836;

struct CholeskyResult {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // diagonal boost that made the factorization succeed

  double log_det() const {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
};

/* Cholesky with escalating diagonal jitter: start at 1e-10 * mean(diag),
 * scale by 10 up to 1e-6 * mean(diag), then give up. */
inline CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& m) {
  CholeskyResult out;
  out.llt.compute(m);
  if (out.llt.info() == Eigen::Success) return out;

  const double scale = m.diagonal().mean();
  double rel = 1e-10;
  while (rel <= 1e-6) {
    const double jitter = rel * scale;
    Eigen::MatrixXd boosted = m;
    boosted.diagonal().array() += jitter;
    out.llt.compute(boosted);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
    rel *= 10.0;
  }
  throw NumericalError("Cholesky failed after jitter escalation to 1e-6 * mean(diag)");
}

/* log N(y; mean, cov) with cov factored through cholesky_with_jitter. */
inline double mvn_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
  const auto chol = cholesky_with_jitter(cov);
  const Eigen::VectorXd r = y - mean;
  const Eigen::VectorXd half = chol.llt.matrixL().solve(r);
  return -0.5 * static_cast<double>(y.size()) * kLog2Pi - 0.5 * chol.log_det() -
         0.5 * half.squaredNorm();
}

}  // namespace mgp

#endif

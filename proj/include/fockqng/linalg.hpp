#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fockqng {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Thrown when an iterative numerical procedure fails to meet its tolerance.
/// `what()` carries the diagnostics.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace linalg {

CMatrix annihilation(int dim);
CMatrix creation(int dim);
CMatrix number(int dim);
CMatrix kron(const CMatrix& a, const CMatrix& b);

/// exp(g) for anti-Hermitian g, through the eigendecomposition of i*g.
CMatrix expm_antihermitian(const CMatrix& g);

/// exp(-i h t) for Hermitian h.
CMatrix expm_hermitian(const CMatrix& h, double t);

bool is_hermitian(const CMatrix& m, double tol);

/// 0.5 * || a - b ||_1 for Hermitian a, b.
double trace_distance(const CMatrix& a, const CMatrix& b);

}  // namespace linalg
}  // namespace fockqng

#include "fockqng/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fockqng {

FockBasis::FockBasis(int dim) : dim_(dim) {
  if (dim < 2) throw std::domain_error("FockBasis: dim must be >= 2, got " + std::to_string(dim));
}

// ---------------------------------------------------------------------------

FockDistribution::FockDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  constexpr double kSlack = 1e-12;
  for (std::size_t n = 0; n < probs_.size(); ++n) {
    double& p = probs_[n];
    if (!std::isfinite(p) || p < -kSlack || p > 1.0 + kSlack)
      throw std::domain_error("FockDistribution: P_" + std::to_string(n) + " = " +
                              std::to_string(p) + " outside [0, 1]");
    p = std::clamp(p, 0.0, 1.0);
  }
  if (total() > 1.0 + 1e-9)
    throw std::domain_error("FockDistribution: total probability " + std::to_string(total()) +
                            " exceeds 1");
}

FockDistribution FockDistribution::fock(int n) {
  if (n < 0) throw std::out_of_range("FockDistribution::fock: negative index");
  std::vector<double> p(static_cast<std::size_t>(n) + 1, 0.0);
  p[static_cast<std::size_t>(n)] = 1.0;
  return FockDistribution(std::move(p));
}

double FockDistribution::operator[](int n) const noexcept {
  if (n < 0 || n >= size()) return 0.0;
  return probs_[static_cast<std::size_t>(n)];
}

double FockDistribution::total() const noexcept {
  return std::accumulate(probs_.begin(), probs_.end(), 0.0);
}

double FockDistribution::tail_from(int n) const noexcept {
  double s = 0.0;
  for (int m = std::max(n, 0); m < size(); ++m) s += probs_[static_cast<std::size_t>(m)];
  return s;
}

double FockDistribution::mean() const noexcept {
  double s = 0.0;
  for (int m = 0; m < size(); ++m) s += m * probs_[static_cast<std::size_t>(m)];
  return s;
}

// ---------------------------------------------------------------------------

StateVector::StateVector(CVector amplitudes) : amps_(std::move(amplitudes)) {
  const double norm = amps_.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::domain_error("StateVector: amplitudes have zero or non-finite norm");
  amps_ /= norm;
}

FockDistribution StateVector::populations() const {
  std::vector<double> p(static_cast<std::size_t>(amps_.size()));
  for (Eigen::Index k = 0; k < amps_.size(); ++k) p[static_cast<std::size_t>(k)] = std::norm(amps_(k));
  return FockDistribution(std::move(p));
}

double StateVector::edge_population() const noexcept {
  const auto d = amps_.size();
  double s = std::norm(amps_(d - 1));
  if (d >= 2) s += std::norm(amps_(d - 2));
  return s;
}

// ---------------------------------------------------------------------------

DensityMatrix::DensityMatrix(CMatrix elements) : rho_(std::move(elements)) {
  if (rho_.rows() != rho_.cols() || rho_.rows() < 2)
    throw std::domain_error("DensityMatrix: matrix must be square with dim >= 2");
  if (!linalg::is_hermitian(rho_, 1e-10))
    throw std::domain_error("DensityMatrix: not Hermitian within 1e-10");
  rho_ = 0.5 * (rho_ + rho_.adjoint()).eval();
  const double tr = rho_.trace().real();
  if (std::abs(tr - 1.0) > 1e-10)
    throw std::domain_error("DensityMatrix: trace " + std::to_string(tr) + " differs from 1");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9)
    throw std::domain_error("DensityMatrix: negative eigenvalue " +
                            std::to_string(es.eigenvalues().minCoeff()));
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  return DensityMatrix(psi.amplitudes() * psi.amplitudes().adjoint());
}

DensityMatrix DensityMatrix::fock(int n, const FockBasis& basis) {
  return pure(fock_state(n, basis));
}

DensityMatrix DensityMatrix::diagonal(const FockDistribution& dist, const FockBasis& basis) {
  if (dist.size() > basis.dim())
    throw std::out_of_range("DensityMatrix::diagonal: distribution longer than basis");
  CMatrix rho = CMatrix::Zero(basis.dim(), basis.dim());
  for (int n = 0; n < dist.size(); ++n) rho(n, n) = dist[n];
  return DensityMatrix(std::move(rho));
}

FockDistribution DensityMatrix::populations() const {
  std::vector<double> p(static_cast<std::size_t>(rho_.rows()));
  for (Eigen::Index k = 0; k < rho_.rows(); ++k) p[static_cast<std::size_t>(k)] = rho_(k, k).real();
  return FockDistribution(std::move(p));
}

void CoreStateParams::validate() const {
  if (coeffs.empty()) throw std::domain_error("CoreStateParams: empty coefficient list");
  double s = 0.0;
  for (const auto& c : coeffs) s += std::norm(c);
  if (std::abs(s - 1.0) > 1e-10)
    throw std::domain_error("CoreStateParams: sum |c_m|^2 = " + std::to_string(s) + " != 1");
}

// ---------------------------------------------------------------------------

StateVector fock_state(int n, const FockBasis& basis) {
  if (n < 0 || n >= basis.dim())
    throw std::out_of_range("fock_state: n = " + std::to_string(n) + " outside basis of dim " +
                            std::to_string(basis.dim()));
  CVector v = CVector::Zero(basis.dim());
  v(n) = 1.0;
  return StateVector(std::move(v));
}

CMatrix displacement_operator(cplx alpha, const FockBasis& basis) {
  const CMatrix a = linalg::annihilation(basis.dim());
  const CMatrix g = alpha * a.adjoint() - std::conj(alpha) * a;
  return linalg::expm_antihermitian(g);
}

SqueezeOperator squeezing_operator(cplx r, const FockBasis& basis) {
  const CMatrix a = linalg::annihilation(basis.dim());
  const CMatrix a2 = a * a;
  const CMatrix g = 0.5 * (std::conj(r) * a2 - r * a2.adjoint());
  SqueezeOperator out{linalg::expm_antihermitian(g), false};
  const int d = basis.dim();
  const double edge = std::norm(out.matrix(d - 1, 0)) + std::norm(out.matrix(d - 2, 0));
  out.edge_warning = edge > kEdgeLeakThreshold;
  return out;
}

CoreState core_state(const CoreStateParams& params, const FockBasis& basis) {
  params.validate();
  const int n_coeffs = static_cast<int>(params.coeffs.size());
  if (2 * n_coeffs > basis.dim())
    throw std::domain_error("core_state: " + std::to_string(n_coeffs) +
                            " coefficients need dim >= " + std::to_string(2 * n_coeffs));
  CVector v = CVector::Zero(basis.dim());
  for (int m = 0; m < n_coeffs; ++m) v(m) = params.coeffs[static_cast<std::size_t>(m)];
  const auto sq = squeezing_operator(params.r, basis);
  v = displacement_operator(params.alpha, basis) * (sq.matrix * v);
  StateVector psi(std::move(v));
  const bool warn = sq.edge_warning || psi.edge_population() > kEdgeLeakThreshold;
  return CoreState{std::move(psi), warn};
}

// ---------------------------------------------------------------------------

double generalized_laguerre(int degree, double order, double x) {
  if (degree < 0) throw std::domain_error("generalized_laguerre: negative degree");
  double prev = 1.0;
  if (degree == 0) return prev;
  double cur = 1.0 + order - x;
  for (int k = 1; k < degree; ++k) {
    const double next = ((2.0 * k + 1.0 + order - x) * cur - (k + order) * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

double displacement_amplitude(int m, int n, double x) {
  if (m < 0 || n < 0) throw std::domain_error("displacement_amplitude: negative index");
  if (m < n) return ((m + n) % 2 == 0 ? 1.0 : -1.0) * displacement_amplitude(n, m, x);
  if (x == 0.0) return m == n ? 1.0 : 0.0;
  const int j = m - n;
  const double x2 = x * x;
  const double log_pref =
      0.5 * (std::lgamma(n + 1.0) - std::lgamma(m + 1.0)) + j * std::log(std::abs(x)) - 0.5 * x2;
  const double sign = (x < 0.0 && j % 2 == 1) ? -1.0 : 1.0;
  return sign * std::exp(log_pref) * generalized_laguerre(n, j, x2);
}

double displacement_overlap(int m, int n, cplx alpha) {
  const double amp = displacement_amplitude(std::max(m, n), std::min(m, n), std::abs(alpha));
  return amp * amp;
}

DisplacedDistribution displaced_fock_distribution(const FockDistribution& dist, cplx alpha,
                                                  int out_len) {
  if (out_len < 1) throw std::domain_error("displaced_fock_distribution: out_len must be >= 1");
  const double x = std::abs(alpha);
  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  for (int n = 0; n < dist.size(); ++n) {
    const double pn = dist[n];
    if (pn == 0.0) continue;
    for (int m = 0; m < out_len; ++m) {
      const double amp = displacement_amplitude(m, n, x);
      out[static_cast<std::size_t>(m)] += pn * amp * amp;
    }
  }
  const double in_total = dist.total();
  double out_total = 0.0;
  for (double p : out) out_total += p;
  // Guard against rounding pushing the sum a hair over one.
  if (out_total > in_total && out_total > 0.0)
    for (double& p : out) p *= in_total / out_total;
  const bool warn = out_total < in_total - 1e-6;
  return DisplacedDistribution{FockDistribution(std::move(out)), warn};
}

}  // namespace fockqng

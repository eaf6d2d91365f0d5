#pragma once

// Truncated Fock-space states and operators, and the closed-form
// displaced-number-state overlaps.

#include <span>
#include <vector>

#include "fockqng/linalg.hpp"

namespace fockqng {

/// Population in the top two basis states above which a state is flagged as
/// leaking through the truncation edge.
inline constexpr double kEdgeLeakThreshold = 1e-6;

/// States |0> .. |dim-1>.
class FockBasis {
 public:
  explicit FockBasis(int dim);
  int dim() const noexcept { return dim_; }

 private:
  int dim_;
};

/// Nonnegative probabilities indexed by phonon number. The tail beyond
/// `size()` may be truncated, so the total can be below one.
class FockDistribution {
 public:
  FockDistribution() = default;
  /// Entries within 1e-12 of the interval [0, 1] are clamped; anything
  /// further out, or a total above 1 + 1e-9, throws std::domain_error.
  explicit FockDistribution(std::vector<double> probs);

  static FockDistribution fock(int n);

  std::span<const double> probs() const noexcept { return probs_; }
  int size() const noexcept { return static_cast<int>(probs_.size()); }
  /// P_n, zero beyond the stored range.
  double operator[](int n) const noexcept;
  double total() const noexcept;
  /// Sum of P_m for m >= n.
  double tail_from(int n) const noexcept;
  double mean() const noexcept;

 private:
  std::vector<double> probs_;
};

class StateVector {
 public:
  /// Normalizes the amplitudes; throws std::domain_error on a zero vector.
  explicit StateVector(CVector amplitudes);

  const CVector& amplitudes() const noexcept { return amps_; }
  int dim() const noexcept { return static_cast<int>(amps_.size()); }
  FockDistribution populations() const;
  /// Population held by the top two basis states.
  double edge_population() const noexcept;

 private:
  CVector amps_;
};

/// Hermitian, unit-trace, positive semidefinite matrix in the Fock basis.
class DensityMatrix {
 public:
  /// Validates Hermiticity (1e-10), trace (1e-10) and eigenvalues (>= -1e-9);
  /// throws std::domain_error otherwise. The stored matrix is symmetrized.
  explicit DensityMatrix(CMatrix elements);

  static DensityMatrix pure(const StateVector& psi);
  static DensityMatrix fock(int n, const FockBasis& basis);
  /// Diagonal matrix with the given populations; the missing tail weight
  /// (if any) is not renormalized, so `dist.total()` must be one.
  static DensityMatrix diagonal(const FockDistribution& dist, const FockBasis& basis);

  const CMatrix& matrix() const noexcept { return rho_; }
  int dim() const noexcept { return static_cast<int>(rho_.rows()); }
  FockBasis basis() const { return FockBasis(dim()); }
  FockDistribution populations() const;

 private:
  CMatrix rho_;
};

/// Parameters of a core state D(alpha) S(r) sum_m c_m |m>.
struct CoreStateParams {
  cplx alpha{0.0, 0.0};
  cplx r{0.0, 0.0};
  std::vector<cplx> coeffs{cplx{1.0, 0.0}};

  /// Throws std::domain_error unless sum |c_m|^2 = 1 within 1e-10.
  void validate() const;
};

StateVector fock_state(int n, const FockBasis& basis);

/// exp(alpha a^dag - alpha^* a) on the truncated space.
CMatrix displacement_operator(cplx alpha, const FockBasis& basis);

struct SqueezeOperator {
  CMatrix matrix;
  /// S(r)|0> puts more than kEdgeLeakThreshold into the top two levels.
  bool edge_warning = false;
};

/// exp((r^* a^2 - r a^dag^2) / 2) on the truncated space.
SqueezeOperator squeezing_operator(cplx r, const FockBasis& basis);

struct CoreState {
  StateVector state;
  bool edge_warning = false;
};

/// D(alpha) S(r) sum_m c_m |m>, squeezing applied first. Requires
/// coeffs.size() <= dim / 2.
CoreState core_state(const CoreStateParams& params, const FockBasis& basis);

/// Generalized Laguerre polynomial L_degree^{(order)}(x) by the three-term
/// recurrence in the degree.
double generalized_laguerre(int degree, double order, double x);

/// <m|D(x)|n> for real x. Real-valued; obeys <n|D(x)|m> = (-1)^{m+n} <m|D(x)|n>.
double displacement_amplitude(int m, int n, double x);

/// delta_{m,n}(alpha) = |<m|D(alpha)|n>|^2, independent of arg(alpha).
double displacement_overlap(int m, int n, cplx alpha);

struct DisplacedDistribution {
  FockDistribution dist;
  /// Less than 1 - 1e-6 of the input mass landed inside `out_len` levels.
  bool truncation_warning = false;
};

/// P_m(alpha) = sum_n P_n delta_{m,n}(alpha) for m < out_len (phase-averaged,
/// i.e. exact for Fock-diagonal states).
DisplacedDistribution displaced_fock_distribution(const FockDistribution& dist, cplx alpha,
                                                  int out_len);

}  // namespace fockqng

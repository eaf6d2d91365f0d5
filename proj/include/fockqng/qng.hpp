#pragma once

// Genuine n-phonon quantum non-Gaussianity: thresholds of the witness
// F_{a,n} = P_n + a P_{n+1}^+ over the core-state family
// D(alpha) S(r) sum_{m<n} c_m |m>, witness evaluation, and depth under loss.

#include <cstdint>
#include <vector>

#include "fockqng/hilbert.hpp"

namespace fockqng::qng {

/// (P_n, P_{n+1}^+) where P_{n+1}^+ is the probability of n+1 or more phonons.
struct QngPoint {
  int n = 1;
  double p_n = 0.0;
  double p_tail = 0.0;

  /// Throws std::domain_error for entries outside [0,1] or p_n + p_tail > 1 + 1e-12.
  void validate() const;
  static QngPoint from_distribution(const FockDistribution& dist, int n);
};

struct OptimizerConfig {
  int restarts = 64;
  double alpha_box = 3.5;  // |alpha| search bound
  double r_box = 1.2;      // |r| search bound
  int dim = 160;           // levels used for core-state amplitudes
  std::uint64_t seed = 1;
  double tolerance = 1e-9;  // simplex size at convergence
  int max_iterations = 4000;

  void validate() const;
};

/// {0} followed by `count - 1` log-spaced values in [1e-3, a_max].
std::vector<double> default_a_grid(int count = 64, double a_max = 20.0);

/// Rows 0..n of D(alpha) S(r), restricted to columns 0..n-1, from exact
/// (untruncated-space) matrix elements summed over `levels` intermediate
/// Fock states. `leakage` bounds the norm missing from that sum.
struct CoreAmplitudes {
  CMatrix rows;  // (n+1) x n
  double leakage = 0.0;
};
CoreAmplitudes core_amplitudes(cplx alpha, cplx r, int n, int levels);

struct ThresholdPoint {
  double a = 0.0;
  double f_bar = 0.0;   // threshold F_bar_n(a)
  double p_n = 0.0;     // boundary point attaining it
  double p_tail = 0.0;
  double alpha = 0.0;   // maximizer; alpha is real after fixing the global phase
  cplx r{0.0, 0.0};
  std::vector<cplx> coeffs;
  int restarts = 0;
  bool converged = true;
  /// The bound is the supremum (P_n, P_{n+1}^+) = (0, 1) approached as
  /// |alpha| -> infinity rather than an optimizer point.
  bool asymptote = false;
  double leakage = 0.0;
};

struct ThresholdCurve {
  int n = 1;
  std::vector<ThresholdPoint> points;
  OptimizerConfig config;

  /// max over the curve of the boundary P_n.
  double max_p_n() const;
};

/// Value F_{a,n} maximized over the core coefficients for fixed (alpha, r),
/// i.e. the top eigenvalue of the n x n witness matrix; fills the maximizing
/// point when `out` is given.
double core_witness_value(double a, int n, cplx alpha, cplx r, int levels,
                          ThresholdPoint* out = nullptr);

/// P_bar_n = max |<n|psi_{n-1}>|^2.
double threshold_pbar(int n, const OptimizerConfig& cfg = {});

/// Parallel over (a, restart) pairs; bit-identical to `threshold_curve_serial`.
ThresholdCurve threshold_curve(int n, const std::vector<double>& a_grid,
                               const OptimizerConfig& cfg = {});
ThresholdCurve threshold_curve_serial(int n, const std::vector<double>& a_grid,
                                      const OptimizerConfig& cfg = {});

inline constexpr double kWitnessTolerance = 1e-4;

struct WitnessResult {
  bool violated = false;
  double margin = 0.0;  // max_a (F_{a,n}(point) - F_bar_n(a))
  double best_a = 0.0;
};

WitnessResult qng_witness(const QngPoint& point, const ThresholdCurve& curve,
                          double tolerance = kWitnessTolerance);

struct DepthResult {
  double eta_min = 1.0;
  double depth_db = 0.0;
  bool violated_at_unit_transmittance = false;
};

/// Smallest transmittance that keeps the witness violated (bisection to 1e-7).
DepthResult qng_depth(const FockDistribution& dist, int n, const ThresholdCurve& curve,
                      double tolerance = kWitnessTolerance);

/// Free-evolution wait time -ln(eta_min) / kappa equivalent to the loss.
double depth_time_equivalent(double eta_min, double kappa);

}  // namespace fockqng::qng

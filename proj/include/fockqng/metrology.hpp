#pragma once

// Displacement-amplitude sensing with Fock-diagonal states: Fisher
// information of number-resolved measurements, its behaviour under loss,
// and the force-sensitivity budget it implies.

#include <span>
#include <vector>

#include "fockqng/channels.hpp"
#include "fockqng/hilbert.hpp"

namespace fockqng::metrology {

inline constexpr double kHbar = 1.054571817e-34;  // J s

/// QFI of |n> for the displacement amplitude: 4(2n+1).
double qfi_fock(int n);

struct FisherResult {
  double fi = 0.0;
  double alpha = 0.0;    // evaluation point (after any nudge)
  int terms_used = 0;    // outcomes m = 0 .. terms_used-1
  int small_terms = 0;   // outcomes with P_m(alpha) < 1e-14 (kept, see below)
  bool nudged = false;   // alpha moved by 1e-9 off a common zero of all P_m terms
};

/// Classical FI of the displaced number distribution,
///   F = sum_m (dP_m/d alpha)^2 / P_m,  P_m(alpha) = sum_n P_n delta_{m,n}(alpha).
/// The alpha-derivative is analytic, from <m|D'(x)|n> = sqrt(m) <m-1|D|n> -
/// sqrt(m+1) <m+1|D|n>. Terms are formed as num^2/den, which stays finite near
/// Laguerre zeros because the same amplitude enters both. `m_max < 0` picks
/// the cutoff from the support and alpha; throws ConvergenceError if the last
/// five terms still change the sum by more than 1e-6 relative.
FisherResult fisher_displacement(const FockDistribution& dist, double alpha, int m_max = -1);

struct FisherWithError {
  double fi = 0.0;
  double sigma = 0.0;
};

/// FI with first-order propagation of independent per-entry uncertainties.
FisherWithError fisher_with_uncertainty(const FockDistribution& dist,
                                        std::span<const double> sigma, double alpha);

struct FisherProfile {
  std::vector<double> alpha;
  std::vector<double> fi;
  double fi_max = 0.0;
  double d0 = 0.0;  // first grid point within 1e-9 (relative) of fi_max
};

/// Parallel over the grid; identical to `fisher_profile_serial`.
FisherProfile fisher_profile(const FockDistribution& dist, std::span<const double> alpha_grid);
FisherProfile fisher_profile_serial(const FockDistribution& dist,
                                    std::span<const double> alpha_grid);

struct SmallAlphaFisher {
  double fi_limit = 0.0;   // Richardson-extrapolated alpha -> 0 limit
  double fi_approx = 0.0;  // 4(n+1) exp(-n t / T1)
};

/// alpha -> 0 FI of |n> after amplitude damping for t / T1.
SmallAlphaFisher small_alpha_fisher(int n, double t_over_t1);

/// Extrapolated alpha -> 0 FI of an arbitrary Fock-diagonal state.
double fisher_zero_limit(const FockDistribution& dist);

/// damp_evolve(|n><n|) -> populations -> fisher_profile.
FisherProfile damped_fock_fisher(int n, const NoiseParams& noise, double t,
                                 std::span<const double> alpha_grid);

/// Transmittance above which |m> beats |n> at small alpha:
/// ((1+n)/(1+m))^{1/(m-n)}.
double crossover_eta(int n, int m);

enum class Reparam { theta, nbar };

/// FI for theta = sqrt(2) alpha (F/2) or nbar = |alpha|^2 (F / 4|alpha|^2).
double fisher_reparam(double fi_alpha, Reparam target, double alpha);

DensityMatrix phase_average(const DensityMatrix& rho);

/// 4(1 + 2 nbar).
double avg_qfi_bound(double nbar);

/// sqrt(hbar / 2 m omega) in metres.
double zero_point_fluctuation(double mass_kg, double omega_rad_s);

struct ForceParams {
  double mass = 0.0;        // kg
  double omega = 0.0;       // rad/s
  double t_probe = 0.0;     // s
  double t_dead = 0.0;      // s
  double total_time = 0.0;  // s; <= 0 means one cycle
  double fq = 4.0;          // Fisher information per shot

  double t_cycle() const noexcept { return t_probe + t_dead; }
  void validate() const;
};

struct ForceSensitivity {
  double delta_f0_per_sqrt_hz = 0.0;  // N/sqrt(Hz)
  double nu = 0.0;                    // shots in total_time
  double x_zpf = 0.0;                 // m
};

/// Delta F_0 sqrt(t_cycle) >= (2 hbar / x_zpf) (t_cycle / t) / sqrt(T F_Q).
ForceSensitivity force_sensitivity(const ForceParams& params);

/// alpha = i F_0 x_zpf t e^{i phi} / (2 hbar) under the rotating-wave approximation.
cplx displacement_from_force(double f0, double x_zpf, double t, double phi);

}  // namespace fockqng::metrology

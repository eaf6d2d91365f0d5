#pragma once

// Open-system evolution of a single bosonic mode: the closed-form
// loss + dephasing solution, beamsplitter (binomial) loss on populations,
// a general GKSL integrator, and loss <-> dB conversions.

#include <cstddef>
#include <span>
#include <vector>

#include "fockqng/hilbert.hpp"

namespace fockqng {

/// Rates in 1/time; omega (rad/time) only enters the rotating phase factor.
struct NoiseParams {
  double kappa = 0.0;
  double gamma_phi = 0.0;
  double omega = 0.0;

  void validate() const;
  /// kappa = 1/T1, gamma_phi = 1/T2* - 1/(2 T1). Both times in the same unit.
  static NoiseParams from_t1_t2star(double t1, double t2star);
};

/// Beamsplitter transmittance eta = exp(-kappa t).
struct LossChannel {
  double eta = 1.0;

  explicit LossChannel(double transmittance);
  static LossChannel from_decay(double kappa, double t);
};

/// Closed-form solution of the master equation with collapse operators
/// sqrt(kappa) a and sqrt(2 gamma_phi) a^dag a. `ell_max < 0` sums the
/// series to the end of the truncated basis.
DensityMatrix damp_evolve(const DensityMatrix& rho0, const NoiseParams& noise, double t,
                          int ell_max = -1);

/// P'_m = sum_{n>=m} P_n C(n,m) eta^m (1-eta)^{n-m}.
FockDistribution binomial_loss(const FockDistribution& dist, const LossChannel& channel);

/// Power loss 10 kappa t / ln 10 in dB of a coherent probe under pure loss.
double loss_db(double kappa, double t);
/// -10 log10(eta).
double transmittance_to_db(double eta);

struct IntegratorTolerance {
  double rel = 1e-8;
  double abs = 1e-10;
  std::size_t max_steps = 2'000'000;
};

/// d rho / dt = -i[H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2).
class LindbladGenerator {
 public:
  LindbladGenerator(CMatrix hamiltonian, std::vector<CMatrix> collapse_ops);

  int dim() const noexcept { return static_cast<int>(h_eff_.rows()); }
  void apply(const CMatrix& rho, CMatrix& drho) const;
  /// Rough upper bound on the generator's rate, used to seed step sizes.
  double rate_scale() const noexcept { return rate_scale_; }

 private:
  CMatrix h_eff_;  // H - (i/2) sum L^dag L
  std::vector<CMatrix> collapse_;
  double rate_scale_ = 0.0;
};

/// Adaptive Dormand-Prince evolution of `rho` over `duration`. Returns the raw
/// matrix so piecewise-constant drives can chain segments without validation.
/// Throws ConvergenceError when the step controller gives up.
CMatrix lindblad_evolve(const LindbladGenerator& gen, const CMatrix& rho, double duration,
                        const IntegratorTolerance& tol = {});

/// Snapshots of rho(t) on `t_grid` (ascending, starting at 0).
std::vector<DensityMatrix> lindblad_propagate(const CMatrix& hamiltonian,
                                              const std::vector<CMatrix>& collapse_ops,
                                              const DensityMatrix& rho0,
                                              std::span<const double> t_grid,
                                              const IntegratorTolerance& tol = {});

struct DecayFit {
  int n = 0;
  double tau = 0.0;
  double rms_log_residual = 0.0;
  int points_used = 0;
};

/// Simulates P_n(t) of |n><n| under loss and fits exp(-t / tau_n) by
/// log-linear least squares over points with P_n > 1e-4.
std::vector<DecayFit> fock_decay_times(std::span<const int> n_list, double kappa,
                                       int samples = 40);

}  // namespace fockqng

#pragma once

// Qubit + acoustic-mode control: the driven Jaynes-Cummings Hamiltonian in
// the drive frame, piecewise-constant pulse propagation, GRAPE synthesis,
// open-system preparation fidelity and resonant phonon-number (RPN) readout.

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "fockqng/channels.hpp"
#include "fockqng/hilbert.hpp"

namespace fockqng::control {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Angular frequencies in rad/s. Basis ordering is qubit (x) phonon, i.e.
/// index = q * phonon_levels + n.
struct SystemParams {
  double omega_q = kTwoPi * 5.023e9;
  double anharm = kTwoPi * 185e6;
  double omega_a = kTwoPi * 5.023e9;
  double g = kTwoPi * 292e3;
  double omega_d = kTwoPi * 5.023e9;
  int qubit_levels = 3;
  int phonon_levels = 8;

  void validate() const;
  int dim() const noexcept { return qubit_levels * phonon_levels; }
  int index(int qubit, int phonon) const noexcept { return qubit * phonon_levels + phonon; }
};

struct Hamiltonian {
  CMatrix drift;
  CMatrix control_real;  // q^dag + q, multiplies I
  CMatrix control_imag;  // i (q^dag - q), multiplies Q
  int qubit_levels = 0;
  int phonon_levels = 0;

  int dim() const noexcept { return static_cast<int>(drift.rows()); }
};

/// (w_q - w_d) q^dag q - (anharm/2) q^dag^2 q^2 + (w_a - w_d) a^dag a + g (q a^dag + q^dag a).
Hamiltonian cqad_hamiltonian(const SystemParams& params);

/// Decay and dephasing of both subsystems.
struct DeviceNoise {
  NoiseParams qubit;
  NoiseParams phonon;

  /// Qubit T1 = 17.2 us, T2* = 24.5 us; phonon T1 = 89 us, T2* = 152 us.
  static DeviceNoise device();
  static DeviceNoise none() { return {}; }
};

/// sqrt(kappa) q, sqrt(2 gamma_phi) q^dag q and the same for the phonon mode.
/// Zero-rate channels are omitted.
std::vector<CMatrix> collapse_operators(const DeviceNoise& noise, int qubit_levels,
                                        int phonon_levels);

/// Piecewise-constant complex drive Omega = I + iQ (rad/s).
struct Pulse {
  double dt = 4e-9;
  std::vector<cplx> samples;

  double duration() const noexcept { return dt * static_cast<double>(samples.size()); }
  double max_amplitude() const noexcept;
};

/// exp(-i (H_drift + I_k H_I + Q_k H_Q) dt) applied step by step. The result
/// is not renormalized.
CVector propagate_pulse(const Pulse& pulse, const Hamiltonian& h, const CVector& initial);

/// |target><initial| transfer problem with exact fidelity gradients.
class GrapeProblem {
 public:
  GrapeProblem(Hamiltonian h, double dt, CVector initial, CVector target);

  /// F = |<target| U |initial>|.
  double fidelity(std::span<const cplx> samples) const;
  /// F and dF/dI_k (real part of grad) and dF/dQ_k (imaginary part).
  double fidelity_gradient(std::span<const cplx> samples, std::vector<cplx>& grad) const;

  const Hamiltonian& hamiltonian() const noexcept { return h_; }
  double dt() const noexcept { return dt_; }

 private:
  Hamiltonian h_;
  double dt_;
  CVector initial_;
  CVector target_;
};

struct GrapeConfig {
  double target_fidelity = 0.999;
  int max_iterations = 3000;
  /// Ceiling on |Omega|. The experimental limit is device-specific; this
  /// default keeps the drive well below the anharmonicity.
  double amplitude_ceiling = kTwoPi * 20e6;
  int restarts = 4;
  std::uint64_t seed = 1;
  int memory = 12;                  // L-BFGS history length
  double initial_amplitude = 0.05;  // of the ceiling, for the random start
  double dt = 4e-9;

  void validate() const;
};

struct GrapeResult {
  Pulse pulse;
  double fidelity = 0.0;
  int iterations = 0;
  std::vector<double> fidelity_history;  // nondecreasing
  bool converged = false;
  int restart = 0;  // restart that produced the pulse
};

/// State transfer |0,g> -> |n,g> over `duration` (rounded to a multiple of dt).
/// Restarts run in parallel; identical to `grape_optimize_serial`.
GrapeResult grape_optimize(int target_n, double duration, const SystemParams& params,
                           const GrapeConfig& cfg = {});
GrapeResult grape_optimize_serial(int target_n, double duration, const SystemParams& params,
                                  const GrapeConfig& cfg = {});

/// Single trajectory from a given start (projected L-BFGS on 1 - F^2).
GrapeResult grape_from(const GrapeProblem& problem, std::vector<cplx> start,
                       const GrapeConfig& cfg);

struct ShortestPulse {
  GrapeResult result;
  double duration = 0.0;
  int probes = 0;
};

/// Bisection on the duration in [t_min, t_max] for the shortest pulse that
/// reaches cfg.target_fidelity within the amplitude ceiling, to `resolution`.
/// Throws ConvergenceError if t_max itself fails.
ShortestPulse grape_shortest(int target_n, double t_min, double t_max, double resolution,
                             const SystemParams& params, const GrapeConfig& cfg = {});

struct PreparationResult {
  double fidelity_prepared = 0.0;
  double fidelity_readout = 0.0;  // NaN unless readout was simulated
  double residual_excitation = 0.0;  // 1 - P(qubit in g) before reset
  FockDistribution prepared;          // phonon populations after reset
  FockDistribution apparent;          // RPN-fitted populations (readout only)
};

struct ReadoutConfig {
  double t_max = 16e-6;
  int points = 321;
  int n_max = -1;  // fit basis size; < 0 uses phonon_levels - 2
};

/// Open-system pulse (all four decoherence channels), ideal qubit reset and,
/// optionally, an RPN readout: the reset state is read out with full noise on a
/// 2-level qubit and fitted with a basis that includes qubit decoherence only,
/// so phonon decay during the readout lowers the apparent fidelity.
PreparationResult simulate_preparation_chain(const Pulse& pulse, int target_n,
                                             const SystemParams& params,
                                             const DeviceNoise& noise, bool include_readout,
                                             const ReadoutConfig& readout = {},
                                             const IntegratorTolerance& tol = {});

struct RpnBasis {
  std::vector<double> t_grid;
  RMatrix curves;  // t_grid.size() x (n_max + 1), P_e(t) for initial |e, n>
};

/// Resonant JC with the qubit starting in e, simulated per Fock index in
/// parallel; identical to `rpn_basis_serial`.
RpnBasis rpn_basis(int n_max, const SystemParams& params, const DeviceNoise& noise,
                   std::span<const double> t_grid, const IntegratorTolerance& tol = {});
RpnBasis rpn_basis_serial(int n_max, const SystemParams& params, const DeviceNoise& noise,
                          std::span<const double> t_grid, const IntegratorTolerance& tol = {});

/// P_e(t) for an arbitrary phonon state with the qubit starting in e.
std::vector<double> rpn_signal(const DensityMatrix& phonon, const SystemParams& params,
                               const DeviceNoise& noise, std::span<const double> t_grid,
                               const IntegratorTolerance& tol = {});

struct RpnFit {
  FockDistribution dist;
  std::vector<double> sigma;
  double residual_rms = 0.0;
  double condition_number = 0.0;
  bool sum_constrained = false;  // the sum <= 1 constraint was active
};

/// Nonnegative least squares for the weights with sum <= 1. With `sigma`
/// (one per time point, all > 0) the rows are weighted and the covariance is
/// (A^T W A)^-1; otherwise it is scaled by the residual variance. Throws
/// ConvergenceError if the basis condition number exceeds 1e8.
RpnFit rpn_fit(std::span<const double> measured, const RpnBasis& basis,
               std::span<const double> sigma = {});

/// Lawson-Hanson NNLS: argmin ||A x - b|| subject to x >= 0.
RVector nnls(const RMatrix& a, const RVector& b, int max_iterations = -1);

/// `count` equally spaced times in [0, t_max].
std::vector<double> uniform_grid(double t_max, int count);

}  // namespace fockqng::control

#include "fockqng/control.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fockqng::control {

void SystemParams::validate() const {
  if (!(g > 0.0)) throw std::domain_error("SystemParams: g must be > 0");
  if (qubit_levels < 2) throw std::domain_error("SystemParams: qubit_levels must be >= 2");
  if (phonon_levels < 2) throw std::domain_error("SystemParams: phonon_levels must be >= 2");
  for (double w : {omega_q, anharm, omega_a, omega_d})
    if (!std::isfinite(w)) throw std::domain_error("SystemParams: non-finite frequency");
}

Hamiltonian cqad_hamiltonian(const SystemParams& params) {
  params.validate();
  const int nq = params.qubit_levels, np = params.phonon_levels;
  const CMatrix iq = CMatrix::Identity(nq, nq), ip = CMatrix::Identity(np, np);
  const CMatrix q = linalg::kron(linalg::annihilation(nq), ip);
  const CMatrix a = linalg::kron(iq, linalg::annihilation(np));
  const CMatrix qd = q.adjoint(), ad = a.adjoint();

  Hamiltonian h;
  h.qubit_levels = nq;
  h.phonon_levels = np;
  h.drift = (params.omega_q - params.omega_d) * (qd * q) - 0.5 * params.anharm * (qd * qd * q * q) +
            (params.omega_a - params.omega_d) * (ad * a) + params.g * (q * ad + qd * a);
  h.control_real = qd + q;
  h.control_imag = cplx{0.0, 1.0} * (qd - q);
  return h;
}

DeviceNoise DeviceNoise::device() {
  return DeviceNoise{NoiseParams::from_t1_t2star(17.2e-6, 24.5e-6),
                     NoiseParams::from_t1_t2star(89e-6, 152e-6)};
}

std::vector<CMatrix> collapse_operators(const DeviceNoise& noise, int qubit_levels,
                                        int phonon_levels) {
  noise.qubit.validate();
  noise.phonon.validate();
  const CMatrix iq = CMatrix::Identity(qubit_levels, qubit_levels);
  const CMatrix ip = CMatrix::Identity(phonon_levels, phonon_levels);
  const CMatrix q = linalg::kron(linalg::annihilation(qubit_levels), ip);
  const CMatrix a = linalg::kron(iq, linalg::annihilation(phonon_levels));
  std::vector<CMatrix> ops;
  if (noise.qubit.kappa > 0.0) ops.push_back(std::sqrt(noise.qubit.kappa) * q);
  if (noise.qubit.gamma_phi > 0.0)
    ops.push_back(std::sqrt(2.0 * noise.qubit.gamma_phi) * (q.adjoint() * q));
  if (noise.phonon.kappa > 0.0) ops.push_back(std::sqrt(noise.phonon.kappa) * a);
  if (noise.phonon.gamma_phi > 0.0)
    ops.push_back(std::sqrt(2.0 * noise.phonon.gamma_phi) * (a.adjoint() * a));
  return ops;
}

double Pulse::max_amplitude() const noexcept {
  double m = 0.0;
  for (const cplx& s : samples) m = std::max(m, std::abs(s));
  return m;
}

namespace {

CMatrix segment_hamiltonian(const Hamiltonian& h, cplx omega) {
  return h.drift + omega.real() * h.control_real + omega.imag() * h.control_imag;
}

void check_pulse(const Pulse& pulse) {
  if (!(pulse.dt > 0.0)) throw std::domain_error("Pulse: dt must be > 0");
  for (const cplx& s : pulse.samples)
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
      throw std::domain_error("Pulse: non-finite sample");
}

}  // namespace

CVector propagate_pulse(const Pulse& pulse, const Hamiltonian& h, const CVector& initial) {
  check_pulse(pulse);
  if (initial.size() != h.dim())
    throw std::invalid_argument("propagate_pulse: state dim " + std::to_string(initial.size()) +
                                " vs Hamiltonian dim " + std::to_string(h.dim()));
  CVector psi = initial;
  CMatrix u;
  for (std::size_t k = 0; k < pulse.samples.size(); ++k) {
    if (k == 0 || pulse.samples[k] != pulse.samples[k - 1])
      u = linalg::expm_hermitian(segment_hamiltonian(h, pulse.samples[k]), pulse.dt);
    psi = u * psi;
  }
  return psi;
}

// ---------------------------------------------------------------------------
// GRAPE

GrapeProblem::GrapeProblem(Hamiltonian h, double dt, CVector initial, CVector target)
    : h_(std::move(h)), dt_(dt), initial_(std::move(initial)), target_(std::move(target)) {
  if (!(dt_ > 0.0)) throw std::domain_error("GrapeProblem: dt must be > 0");
  if (initial_.size() != h_.dim() || target_.size() != h_.dim())
    throw std::invalid_argument("GrapeProblem: state dimension mismatch");
}

double GrapeProblem::fidelity(std::span<const cplx> samples) const {
  Pulse p{dt_, std::vector<cplx>(samples.begin(), samples.end())};
  return std::abs(target_.dot(propagate_pulse(p, h_, initial_)));
}

namespace {

/// (e^z - 1) / z, accurate near z = 0.
cplx expm1_ratio(cplx z) {
  if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
  return (std::exp(z) - 1.0) / z;
}

/// Overlap O = <target|U|initial> and dO/dI_k (real slot), dO/dQ_k (imag slot)
/// stored as separate complex arrays.
cplx overlap_gradient(const Hamiltonian& h, double dt, const CVector& initial,
                      const CVector& target, std::span<const cplx> samples,
                      std::vector<cplx>& d_real, std::vector<cplx>& d_imag) {
  const std::size_t n = samples.size();
  const int d = h.dim();
  std::vector<CMatrix> vecs(n);
  std::vector<RVector> lambdas(n);
  std::vector<CVector> phases(n);  // e^{-i lambda dt}
  std::vector<CVector> psi(n + 1);
  psi[0] = initial;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && samples[k] == samples[k - 1]) {
      vecs[k] = vecs[k - 1];
      lambdas[k] = lambdas[k - 1];
      phases[k] = phases[k - 1];
    } else {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(segment_hamiltonian(h, samples[k]));
      vecs[k] = es.eigenvectors();
      lambdas[k] = es.eigenvalues();
      phases[k] = (es.eigenvalues().cast<cplx>() * cplx{0.0, -dt}).array().exp();
    }
    psi[k + 1] = vecs[k] * phases[k].cwiseProduct(vecs[k].adjoint() * psi[k]);
  }
  const cplx overlap = target.dot(psi[n]);

  d_real.assign(n, 0.0);
  d_imag.assign(n, 0.0);
  CVector chi = target;
  CMatrix w(d, d);
  for (std::size_t k = n; k-- > 0;) {
    const CMatrix& v = vecs[k];
    const CVector a = v.adjoint() * psi[k];
    const CVector b = v.adjoint() * chi;
    // Divided differences of exp over the eigenvalues x = -i lambda dt.
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const cplx z{0.0, -dt * (lambdas[k](i) - lambdas[k](j))};
        const cplx phi = (i == j) ? phases[k](i) : phases[k](j) * expm1_ratio(z);
        w(i, j) = std::conj(b(i)) * phi * a(j);
      }
    }
    // sum_ij (V^dag H V)_ij w_ij = sum_pq H_pq (conj(V) w V^T)_pq
    const CMatrix g = v.conjugate() * w * v.transpose();
    const cplx scale{0.0, -dt};
    d_real[k] = scale * h.control_real.cwiseProduct(g).sum();
    d_imag[k] = scale * h.control_imag.cwiseProduct(g).sum();
    chi = v * phases[k].conjugate().cwiseProduct(b);
  }
  return overlap;
}

}  // namespace

double GrapeProblem::fidelity_gradient(std::span<const cplx> samples,
                                       std::vector<cplx>& grad) const {
  std::vector<cplx> dr, di;
  const cplx o = overlap_gradient(h_, dt_, initial_, target_, samples, dr, di);
  const double f = std::abs(o);
  grad.assign(samples.size(), 0.0);
  if (f == 0.0) return 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k)
    grad[k] = cplx{(std::conj(o) * dr[k]).real() / f, (std::conj(o) * di[k]).real() / f};
  return f;
}

void GrapeConfig::validate() const {
  if (!(target_fidelity > 0.0 && target_fidelity <= 1.0))
    throw std::domain_error("GrapeConfig: target_fidelity must be in (0, 1]");
  if (max_iterations < 1) throw std::domain_error("GrapeConfig: max_iterations must be >= 1");
  if (!(amplitude_ceiling > 0.0)) throw std::domain_error("GrapeConfig: amplitude_ceiling must be > 0");
  if (restarts < 1) throw std::domain_error("GrapeConfig: restarts must be >= 1");
  if (memory < 1) throw std::domain_error("GrapeConfig: memory must be >= 1");
  if (!(initial_amplitude >= 0.0 && initial_amplitude <= 1.0))
    throw std::domain_error("GrapeConfig: initial_amplitude must be in [0, 1]");
  if (!(dt > 0.0)) throw std::domain_error("GrapeConfig: dt must be > 0");
}

namespace {

/// Objective in scaled variables u = Omega / ceiling, packed as
/// [Re u_0, Im u_0, Re u_1, ...]: f = 1 - F^2.
struct Objective {
  const GrapeProblem* problem;
  double ceiling;

  double operator()(const RVector& u, RVector* grad, double* fid) const {
    const std::size_t n = static_cast<std::size_t>(u.size() / 2);
    std::vector<cplx> s(n);
    for (std::size_t k = 0; k < n; ++k)
      s[k] = ceiling * cplx{u(2 * static_cast<Eigen::Index>(k)), u(2 * static_cast<Eigen::Index>(k) + 1)};
    if (!grad) {
      const double f = problem->fidelity(s);
      if (fid) *fid = f;
      return 1.0 - f * f;
    }
    std::vector<cplx> g;
    const double f = problem->fidelity_gradient(s, g);
    if (fid) *fid = f;
    grad->resize(u.size());
    for (std::size_t k = 0; k < n; ++k) {
      // d(1 - F^2) = -2 F dF
      (*grad)(2 * static_cast<Eigen::Index>(k)) = -2.0 * f * g[k].real() * ceiling;
      (*grad)(2 * static_cast<Eigen::Index>(k) + 1) = -2.0 * f * g[k].imag() * ceiling;
    }
    return 1.0 - f * f;
  }
};

void project(RVector& u) {
  for (Eigen::Index k = 0; k + 1 < u.size(); k += 2) {
    const double m = std::hypot(u(k), u(k + 1));
    if (m > 1.0) {
      u(k) /= m;
      u(k + 1) /= m;
    }
  }
}

std::vector<cplx> random_start(std::size_t n, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<cplx> raw(n);
  for (auto& s : raw) s = cplx{normal(rng), normal(rng)};
  // Moving average over ~25 samples for a smooth envelope.
  const std::size_t half = 12;
  std::vector<cplx> out(n);
  double peak = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    const std::size_t lo = k >= half ? k - half : 0, hi = std::min(n - 1, k + half);
    for (std::size_t j = lo; j <= hi; ++j) acc += raw[j];
    out[k] = acc / static_cast<double>(hi - lo + 1);
    peak = std::max(peak, std::abs(out[k]));
  }
  if (peak > 0.0)
    for (auto& s : out) s *= amplitude / peak;
  return out;
}

}  // namespace

GrapeResult grape_from(const GrapeProblem& problem, std::vector<cplx> start,
                       const GrapeConfig& cfg) {
  cfg.validate();
  if (start.empty()) throw std::domain_error("grape_from: empty pulse");
  const Eigen::Index n = static_cast<Eigen::Index>(start.size());
  const Objective obj{&problem, cfg.amplitude_ceiling};

  RVector u(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    u(2 * k) = start[static_cast<std::size_t>(k)].real() / cfg.amplitude_ceiling;
    u(2 * k + 1) = start[static_cast<std::size_t>(k)].imag() / cfg.amplitude_ceiling;
  }
  project(u);

  GrapeResult res;
  RVector g;
  double fid = 0.0;
  double f = obj(u, &g, &fid);
  res.fidelity_history.push_back(fid);

  std::deque<std::pair<RVector, RVector>> mem;  // (s, y)
  int iter = 0;
  int stalled = 0;
  while (iter < cfg.max_iterations && fid < cfg.target_fidelity) {
    // Two-loop recursion.
    RVector dir = -g;
    if (!mem.empty()) {
      std::vector<double> alpha(mem.size());
      RVector q = g;
      for (std::size_t i = mem.size(); i-- > 0;) {
        const double rho = 1.0 / mem[i].second.dot(mem[i].first);
        alpha[i] = rho * mem[i].first.dot(q);
        q -= alpha[i] * mem[i].second;
      }
      const auto& last = mem.back();
      q *= last.first.dot(last.second) / last.second.squaredNorm();
      for (std::size_t i = 0; i < mem.size(); ++i) {
        const double rho = 1.0 / mem[i].second.dot(mem[i].first);
        const double beta = rho * mem[i].second.dot(q);
        q += (alpha[i] - beta) * mem[i].first;
      }
      dir = -q;
      if (dir.dot(g) >= 0.0) {
        mem.clear();
        dir = -g;
      }
    }

    double step = mem.empty() ? std::min(1.0, 0.1 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-300))
                              : 1.0;
    bool accepted = false;
    RVector u_new, g_new;
    double f_new = f, fid_new = fid;
    for (int ls = 0; ls < 40; ++ls) {
      u_new = u + step * dir;
      project(u_new);
      const double decrease = g.dot(u_new - u);
      f_new = obj(u_new, nullptr, &fid_new);
      if (f_new < f && f_new <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (mem.empty()) break;  // steepest descent also failed: local optimum
      mem.clear();
      continue;
    }
    f_new = obj(u_new, &g_new, &fid_new);
    const RVector s = u_new - u, y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(s, y);
      if (static_cast<int>(mem.size()) > cfg.memory) mem.pop_front();
    }
    stalled = (f - f_new < 1e-12 * std::max(f, 1e-300)) ? stalled + 1 : 0;
    u = std::move(u_new);
    g = std::move(g_new);
    f = f_new;
    fid = fid_new;
    ++iter;
    res.fidelity_history.push_back(fid);
    if (stalled >= 25 || g.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }

  res.pulse.dt = problem.dt();
  res.pulse.samples.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k)
    res.pulse.samples[static_cast<std::size_t>(k)] =
        cfg.amplitude_ceiling * cplx{u(2 * k), u(2 * k + 1)};
  res.fidelity = fid;
  res.iterations = iter;
  res.converged = fid >= cfg.target_fidelity;
  return res;
}

namespace {

GrapeProblem transfer_problem(int target_n, const SystemParams& params, double dt) {
  params.validate();
  if (target_n < 0) throw std::domain_error("grape: target n must be >= 0");
  if (params.phonon_levels < target_n + 4)
    throw std::domain_error("grape: phonon_levels must be >= target n + 4");
  Hamiltonian h = cqad_hamiltonian(params);
  CVector init = CVector::Zero(h.dim()), target = CVector::Zero(h.dim());
  init(params.index(0, 0)) = 1.0;
  target(params.index(0, target_n)) = 1.0;
  return GrapeProblem(std::move(h), dt, std::move(init), std::move(target));
}

std::size_t step_count(double duration, double dt) {
  if (!(duration > 0.0)) throw std::domain_error("grape: duration must be > 0");
  const double steps = std::round(duration / dt);
  if (steps < 1.0) throw std::domain_error("grape: duration shorter than one step");
  return static_cast<std::size_t>(steps);
}

std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(restart) * 1000003ULL + 17ULL;
}

GrapeResult pick_best(std::vector<GrapeResult>& runs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].fidelity > runs[best].fidelity) best = k;
  GrapeResult out = std::move(runs[best]);
  out.restart = static_cast<int>(best);
  return out;
}

}  // namespace

GrapeResult grape_optimize(int target_n, double duration, const SystemParams& params,
                           const GrapeConfig& cfg) {
  cfg.validate();
  const GrapeProblem problem = transfer_problem(target_n, params, cfg.dt);
  const std::size_t n = step_count(duration, cfg.dt);
  std::vector<GrapeResult> runs(static_cast<std::size_t>(cfg.restarts));
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < cfg.restarts; ++r) {
    try {
      runs[static_cast<std::size_t>(r)] = grape_from(
          problem,
          random_start(n, cfg.initial_amplitude * cfg.amplitude_ceiling, restart_seed(cfg.seed, r)),
          cfg);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return pick_best(runs);
}

GrapeResult grape_optimize_serial(int target_n, double duration, const SystemParams& params,
                                  const GrapeConfig& cfg) {
  cfg.validate();
  const GrapeProblem problem = transfer_problem(target_n, params, cfg.dt);
  const std::size_t n = step_count(duration, cfg.dt);
  std::vector<GrapeResult> runs;
  for (int r = 0; r < cfg.restarts; ++r)
    runs.push_back(grape_from(
        problem,
        random_start(n, cfg.initial_amplitude * cfg.amplitude_ceiling, restart_seed(cfg.seed, r)),
        cfg));
  return pick_best(runs);
}

ShortestPulse grape_shortest(int target_n, double t_min, double t_max, double resolution,
                             const SystemParams& params, const GrapeConfig& cfg) {
  cfg.validate();
  if (!(t_min > 0.0 && t_max > t_min)) throw std::domain_error("grape_shortest: need 0 < t_min < t_max");
  if (!(resolution >= cfg.dt)) throw std::domain_error("grape_shortest: resolution must be >= dt");
  std::size_t lo = step_count(t_min, cfg.dt), hi = step_count(t_max, cfg.dt);
  const std::size_t res_steps = step_count(resolution, cfg.dt);

  ShortestPulse out;
  out.result = grape_optimize(target_n, static_cast<double>(hi) * cfg.dt, params, cfg);
  out.probes = 1;
  if (!out.result.converged) {
    std::ostringstream msg;
    msg << "grape_shortest: no pulse reaches fidelity " << cfg.target_fidelity << " at t_max = "
        << t_max << " s (best " << out.result.fidelity << ")";
    throw ConvergenceError(msg.str());
  }
  while (hi - lo > res_steps) {
    const std::size_t mid = lo + (hi - lo) / 2;
    GrapeResult r = grape_optimize(target_n, static_cast<double>(mid) * cfg.dt, params, cfg);
    ++out.probes;
    if (r.converged) {
      hi = mid;
      out.result = std::move(r);
    } else {
      lo = mid;
    }
  }
  out.duration = static_cast<double>(hi) * cfg.dt;
  return out;
}

// ---------------------------------------------------------------------------
// Open-system preparation

PreparationResult simulate_preparation_chain(const Pulse& pulse, int target_n,
                                             const SystemParams& params,
                                             const DeviceNoise& noise, bool include_readout,
                                             const ReadoutConfig& readout,
                                             const IntegratorTolerance& tol) {
  check_pulse(pulse);
  params.validate();
  if (target_n < 0 || target_n >= params.phonon_levels)
    throw std::domain_error("simulate_preparation_chain: target n outside the phonon space");
  const Hamiltonian h = cqad_hamiltonian(params);
  const auto ops = collapse_operators(noise, params.qubit_levels, params.phonon_levels);
  const int np = params.phonon_levels;

  CMatrix rho = CMatrix::Zero(h.dim(), h.dim());
  rho(params.index(0, 0), params.index(0, 0)) = 1.0;
  std::size_t k = 0;
  while (k < pulse.samples.size()) {
    std::size_t run = 1;
    while (k + run < pulse.samples.size() && pulse.samples[k + run] == pulse.samples[k]) ++run;
    const LindbladGenerator gen(segment_hamiltonian(h, pulse.samples[k]), ops);
    rho = lindblad_evolve(gen, rho, pulse.dt * static_cast<double>(run), tol);
    k += run;
  }

  // Trace out the qubit, then reset it to g.
  CMatrix phonon = CMatrix::Zero(np, np);
  double ground = 0.0;
  for (int q = 0; q < params.qubit_levels; ++q)
    phonon += rho.block(q * np, q * np, np, np);
  for (int n = 0; n < np; ++n) ground += rho(params.index(0, n), params.index(0, n)).real();
  phonon /= phonon.trace().real();

  PreparationResult out;
  const DensityMatrix reduced(phonon);
  out.prepared = reduced.populations();
  out.fidelity_prepared = out.prepared[target_n];
  out.residual_excitation = 1.0 - ground;
  out.fidelity_readout = std::numeric_limits<double>::quiet_NaN();
  if (!include_readout) return out;

  SystemParams ro = params;
  ro.qubit_levels = 2;
  const int n_max = readout.n_max < 0 ? np - 2 : readout.n_max;
  if (n_max < target_n || n_max > np - 2)
    throw std::domain_error("simulate_preparation_chain: readout n_max must be in [target n, phonon_levels - 2]");
  const auto grid = uniform_grid(readout.t_max, readout.points);
  const auto signal = rpn_signal(reduced, ro, noise, grid, tol);
  const auto basis = rpn_basis(n_max, ro, DeviceNoise{noise.qubit, NoiseParams{}}, grid, tol);
  const RpnFit fit = rpn_fit(signal, basis);
  out.apparent = fit.dist;
  out.fidelity_readout = fit.dist[target_n];
  return out;
}

}  // namespace fockqng::control

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fockqng/control.hpp"
#include "oracles.hpp"

using namespace fockqng;
using namespace fockqng::control;

namespace {

constexpr double kPi = std::numbers::pi;

SystemParams toy(int nq = 3, int np = 5) {
  SystemParams p;
  p.omega_q = p.omega_a = p.omega_d = 0.0;
  p.anharm = 0.7;
  p.g = 0.4;
  p.qubit_levels = nq;
  p.phonon_levels = np;
  return p;
}

CVector basis_state(const SystemParams& p, int q, int n) {
  CVector v = CVector::Zero(p.dim());
  v(p.index(q, n)) = 1.0;
  return v;
}

std::vector<cplx> random_samples(int count, double scale, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  std::vector<cplx> s(static_cast<std::size_t>(count));
  for (auto& x : s) x = scale * cplx(g(rng), g(rng));
  return s;
}

}  // namespace

TEST_CASE("cQAD Hamiltonian structure") {
  for (int nq : {2, 3}) {
    const auto p = toy(nq, 6);
    const auto h = cqad_hamiltonian(p);
    CHECK(linalg::is_hermitian(h.drift, 1e-14));
    CHECK(linalg::is_hermitian(h.control_real, 1e-14));
    CHECK(linalg::is_hermitian(h.control_imag, 1e-14));
    const CMatrix nexc = linalg::kron(linalg::number(nq), CMatrix::Identity(6, 6)) +
                         linalg::kron(CMatrix::Identity(nq, nq), linalg::number(6));
    CHECK((h.drift * nexc - nexc * h.drift).norm() < 1e-12);
  }
  SystemParams detuned = toy(2, 4);
  detuned.omega_q = 0.3;
  const auto h = cqad_hamiltonian(detuned);
  CHECK(h.drift(detuned.index(1, 0), detuned.index(1, 0)).real() == doctest::Approx(0.3));
  CHECK_THROWS_AS(cqad_hamiltonian(toy(1, 4)), std::domain_error);
}

TEST_CASE("vacuum Rabi swap through the propagator") {
  const auto p = toy(2, 4);
  const auto h = cqad_hamiltonian(p);
  Pulse pulse;
  pulse.dt = kPi / (2.0 * p.g) / 50.0;
  pulse.samples.assign(50, 0.0);
  const CVector out = propagate_pulse(pulse, h, basis_state(p, 0, 1));
  CHECK(std::norm(out(p.index(1, 0))) == doctest::Approx(1.0).epsilon(1e-12));
  // Partial swap against the closed form.
  pulse.samples.resize(17);
  const CVector part = propagate_pulse(pulse, h, basis_state(p, 1, 2));
  CHECK(std::norm(part(p.index(1, 2))) == doctest::Approx(oracle::jc_excited(2, p.g, pulse.duration())).epsilon(1e-12));
}

TEST_CASE("propagation basics") {
  const auto p = toy(2, 3);
  auto h = cqad_hamiltonian(p);
  h.drift.setZero();
  Pulse zero;
  zero.dt = 0.1;
  zero.samples.assign(10, 0.0);
  const CVector v = CVector::Random(p.dim()).normalized();
  CHECK((propagate_pulse(zero, h, v) - v).norm() < 1e-14);

  const auto q = toy(3, 6);
  const auto hq = cqad_hamiltonian(q);
  Pulse pulse;
  pulse.dt = 0.05;
  pulse.samples = random_samples(1000, 0.3, 2);
  const CVector out = propagate_pulse(pulse, hq, basis_state(q, 0, 0));
  CHECK(std::abs(out.norm() - 1.0) < 1e-9);

  Pulse fine;
  fine.dt = pulse.dt / 2.0;
  for (std::size_t k = 0; k < 200; ++k) {
    fine.samples.push_back(pulse.samples[k]);
    fine.samples.push_back(pulse.samples[k]);
  }
  pulse.samples.resize(200);
  CHECK((propagate_pulse(pulse, hq, basis_state(q, 0, 0)) - propagate_pulse(fine, hq, basis_state(q, 0, 0))).norm() < 1e-8);
  CHECK_THROWS_AS(propagate_pulse(pulse, hq, CVector::Zero(3)), std::invalid_argument);
}

TEST_CASE("GRAPE gradient matches finite differences") {
  const auto p = toy();
  const GrapeProblem prob(cqad_hamiltonian(p), 0.7, basis_state(p, 0, 0), basis_state(p, 0, 1));
  const auto s = random_samples(3, 0.5, 7);
  std::vector<cplx> grad;
  const double f = prob.fidelity_gradient(s, grad);
  CHECK(f == doctest::Approx(prob.fidelity(s)).epsilon(1e-12));
  const double h = 1e-6;
  for (std::size_t k = 0; k < s.size(); ++k)
    for (cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
      auto up = s, dn = s;
      up[k] += h * dir;
      dn[k] -= h * dir;
      const double fd = (prob.fidelity(up) - prob.fidelity(dn)) / (2.0 * h);
      const double an = dir.real() != 0.0 ? grad[k].real() : grad[k].imag();
      CHECK(std::abs(an - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
    }
}

TEST_CASE("GRAPE trajectory is monotone and respects the ceiling") {
  const auto p = toy();
  const GrapeProblem prob(cqad_hamiltonian(p), 0.25, basis_state(p, 0, 0), basis_state(p, 0, 1));
  GrapeConfig cfg;
  cfg.amplitude_ceiling = 2.0;
  cfg.max_iterations = 200;
  const auto res = grape_from(prob, random_samples(40, 0.1, 3), cfg);
  for (std::size_t k = 1; k < res.fidelity_history.size(); ++k)
    CHECK(res.fidelity_history[k] >= res.fidelity_history[k - 1] - 1e-12);
  CHECK(res.pulse.max_amplitude() <= cfg.amplitude_ceiling * (1.0 + 1e-12));
  CHECK(res.fidelity > 0.999);
  CHECK(res.fidelity == doctest::Approx(prob.fidelity(res.pulse.samples)).epsilon(1e-12));
}

TEST_CASE("GRAPE single-phonon transfer at device parameters") {
  SystemParams p;
  p.phonon_levels = 5;
  GrapeConfig cfg;
  cfg.restarts = 1;
  const auto res = grape_optimize(1, 1.2e-6, p, cfg);
  CHECK(res.converged);
  CHECK(res.fidelity >= 0.999);
  CHECK(res.pulse.samples.size() == 300);
  const auto h = cqad_hamiltonian(p);
  const double check = std::abs(propagate_pulse(res.pulse, h, basis_state(p, 0, 0))(p.index(0, 1)));
  CHECK(std::abs(check - res.fidelity) < 1e-6);

  SystemParams small = p;
  small.phonon_levels = 4;
  CHECK_THROWS_AS(grape_optimize(1, 1e-6, small, cfg), std::domain_error);
}

TEST_CASE("parallel GRAPE restarts equal the serial reference") {
  SystemParams p;
  p.phonon_levels = 5;
  GrapeConfig cfg;
  cfg.restarts = 3;
  cfg.max_iterations = 15;
  const auto a = grape_optimize(1, 0.4e-6, p, cfg);
  const auto b = grape_optimize_serial(1, 0.4e-6, p, cfg);
  CHECK(a.fidelity == b.fidelity);
  CHECK(a.restart == b.restart);
  CHECK(a.pulse.samples == b.pulse.samples);
}

TEST_CASE("preparation chain limits") {
  SystemParams p;
  p.phonon_levels = 5;
  GrapeConfig cfg;
  cfg.restarts = 1;
  const auto res = grape_optimize(1, 1.2e-6, p, cfg);
  const auto clean = simulate_preparation_chain(res.pulse, 1, p, DeviceNoise::none(), false);
  // The population is the squared overlap amplitude.
  CHECK(std::abs(clean.fidelity_prepared - res.fidelity * res.fidelity) < 1e-4);
  CHECK(std::isnan(clean.fidelity_readout));
  const auto noisy = simulate_preparation_chain(res.pulse, 1, p, DeviceNoise::device(), true);
  CHECK(noisy.fidelity_prepared < clean.fidelity_prepared);
  CHECK(noisy.fidelity_readout < noisy.fidelity_prepared);
  CHECK(noisy.apparent.total() <= 1.0 + 1e-9);
}

TEST_CASE("RPN basis follows the Jaynes-Cummings ladder") {
  SystemParams p;
  p.qubit_levels = 2;
  p.phonon_levels = 6;
  const auto grid = uniform_grid(16e-6, 641);
  const auto basis = rpn_basis(4, p, DeviceNoise::none(), grid);
  for (std::size_t k = 0; k < grid.size(); k += 7)
    CHECK(std::abs(basis.curves(static_cast<Eigen::Index>(k), 0) - oracle::jc_excited(0, p.g, grid[k])) < 1e-6);
  const double dt = grid[1] - grid[0];
  auto column = [&](int n) {
    std::vector<double> c(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) c[k] = basis.curves(static_cast<Eigen::Index>(k), n);
    return c;
  };
  const double f0 = oracle::dominant_frequency(column(0), dt);
  CHECK(f0 == doctest::Approx(p.g / kPi).epsilon(0.02));
  for (int n = 1; n <= 4; ++n)
    CHECK(oracle::dominant_frequency(column(n), dt) / f0 == doctest::Approx(std::sqrt(n + 1.0)).epsilon(0.01));

  const auto ser = rpn_basis_serial(2, p, DeviceNoise::device(), grid);
  const auto par = rpn_basis(2, p, DeviceNoise::device(), grid);
  CHECK(ser.curves == par.curves);
  // Visibility of the n = 0 oscillation decays with the qubit/phonon lifetimes.
  double early = 0.0, late = 0.0;
  for (std::size_t k = 0; k < 80; ++k) early = std::max(early, std::abs(par.curves(static_cast<Eigen::Index>(k), 0) - 0.5));
  for (std::size_t k = grid.size() - 80; k < grid.size(); ++k)
    late = std::max(late, std::abs(par.curves(static_cast<Eigen::Index>(k), 0) - 0.5));
  CHECK(late < early);

  CHECK_THROWS_AS(rpn_basis(4, p, DeviceNoise::none(), uniform_grid(1e-6, 20)), std::domain_error);
  CHECK_THROWS_AS(rpn_basis(5, p, DeviceNoise::none(), grid), std::domain_error);
}

TEST_CASE("RPN fit inverts the forward model") {
  SystemParams p;
  p.qubit_levels = 2;
  p.phonon_levels = 7;
  const auto grid = uniform_grid(16e-6, 321);
  const auto noise = DeviceNoise::device();
  const auto basis = rpn_basis(5, p, noise, grid);

  std::vector<double> member(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) member[k] = basis.curves(static_cast<Eigen::Index>(k), 3);
  const auto fit = rpn_fit(member, basis);
  for (int n = 0; n <= 5; ++n) CHECK(std::abs(fit.dist[n] - (n == 3 ? 1.0 : 0.0)) < 1e-6);

  const FockDistribution mix({0.0, 0.0, 0.6, 0.4, 0.0, 0.0, 0.0});
  const auto signal = rpn_signal(DensityMatrix::diagonal(mix, FockBasis(7)), p, noise, grid);
  const auto fit2 = rpn_fit(signal, basis);
  CHECK(std::abs(fit2.dist[2] - 0.6) < 1e-6);
  CHECK(std::abs(fit2.dist[3] - 0.4) < 1e-6);
  CHECK(fit2.residual_rms < 1e-7);

  std::vector<double> sigma(grid.size(), 0.01);
  const auto weighted = rpn_fit(signal, basis, sigma);
  CHECK(weighted.sigma[2] > 0.0);
  CHECK(weighted.sigma[2] < 0.05);

  // A curve above every basis member pushes the sum constraint.
  std::vector<double> big(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) big[k] = 1.3 * member[k];
  const auto capped = rpn_fit(big, basis);
  CHECK(capped.sum_constrained);
  CHECK(capped.dist.total() <= 1.0 + 1e-9);

  RpnBasis degenerate = basis;
  degenerate.curves.col(1) = degenerate.curves.col(0);
  CHECK_THROWS_AS(rpn_fit(member, degenerate), ConvergenceError);
  CHECK_THROWS_AS(rpn_fit(std::vector<double>(5, 0.0), basis), std::invalid_argument);
}

TEST_CASE("nonnegative least squares") {
  RMatrix a(4, 2);
  a << 1, 0, 0, 1, 1, 1, 0, 0;
  RVector b(4);
  b << 1, -1, 0, 0;
  const RVector x = nnls(a, b);
  CHECK(x(1) == 0.0);
  CHECK(x(0) == doctest::Approx(0.5));
  RVector b2 = a * RVector::Constant(2, 0.3);
  CHECK((nnls(a, b2) - RVector::Constant(2, 0.3)).norm() < 1e-12);
}

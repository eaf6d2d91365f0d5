// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "fockqng/channels.hpp"
#include "fockqng/control.hpp"
#include "fockqng/io.hpp"
#include "fockqng/metrology.hpp"
#include "fockqng/qng.hpp"
#include "oracles.hpp"

using namespace fockqng;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... T>
std::string fmt(const char* f, T... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> g;
  for (int k = 0; k < count; ++k) g.push_back(lo + (hi - lo) * k / (count - 1));
  return g;
}

Outcome overlap_oracle() {
  double worst = 0.0;
  for (double mag : linspace(0.0, 2.0, 9))
    for (double phase : {0.0, 0.9, 2.5}) {
      const cplx alpha = std::polar(mag, phase);
      const CMatrix d = oracle::displacement(alpha, 60);
      for (int m = 0; m <= 10; ++m)
        for (int n = 0; n <= 10; ++n)
          worst = std::max(worst, std::abs(displacement_overlap(m, n, alpha) - std::norm(d(m, n))));
    }
  return {worst < 1e-9, fmt("max |delta - expm| = %.2e", worst)};
}

Outcome fock_fi_saturation() {
  double worst = 0.0;
  for (int n = 0; n <= 8; ++n)
    for (double a : {0.1, 0.5, 1.0, 1.5})
      worst = std::max(worst, std::abs(metrology::fisher_displacement(FockDistribution::fock(n), a).fi -
                                       metrology::qfi_fock(n)));
  return {worst < 1e-5, fmt("max |F - 4(2n+1)| = %.2e", worst)};
}

Outcome channel_vs_integrator() {
  const int dim = 20;
  std::mt19937 rng(4);
  std::normal_distribution<double> g;
  CMatrix x(dim, 3);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = cplx(g(rng), g(rng)) / (1.0 + i);
  CMatrix r = x * x.adjoint();
  const DensityMatrix rho(r / r.trace().real());
  const NoiseParams noise{1.0, 0.4, 0.0};
  const auto grid = linspace(0.0, 3.0, 13);
  const std::vector<CMatrix> ops{linalg::annihilation(dim), std::sqrt(0.8) * linalg::number(dim)};
  const auto num = lindblad_propagate(CMatrix::Zero(dim, dim), ops, rho, grid);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    worst = std::max(worst, linalg::trace_distance(damp_evolve(rho, noise, grid[k]).matrix(), num[k].matrix()));
  return {worst < 1e-6, fmt("max trace distance = %.2e (kappa t <= 3, gamma_phi = 0.4 kappa)", worst)};
}

Outcome fock_decay_law() {
  const std::vector<int> ns{1, 2, 3, 4, 5, 6};
  const auto fits = fock_decay_times(ns, 1.0 / 85.0);
  double worst = 0.0;
  for (const auto& f : fits) worst = std::max(worst, std::abs(f.tau * f.n / fits[0].tau - 1.0));
  return {worst < 0.01, fmt("tau_1 = %.3f us, max |tau_n n / tau_1 - 1| = %.2e", fits[0].tau, worst)};
}

Outcome binomial_equivalence() {
  const double kappa = 1.0 / 85.0;
  double worst = 0.0;
  for (int n = 0; n <= 8; ++n)
    for (double t : {0.0, 3.0, 20.0, 85.0, 300.0}) {
      const auto lossy = binomial_loss(FockDistribution::fock(n), LossChannel::from_decay(kappa, t));
      const auto damped = damp_evolve(DensityMatrix::fock(n, FockBasis(10)), NoiseParams{kappa, 0.0, 0.0}, t);
      for (int m = 0; m <= n; ++m) worst = std::max(worst, std::abs(lossy[m] - damped.matrix()(m, m).real()));
    }
  return {worst < 1e-12, fmt("max difference = %.2e", worst)};
}

Outcome small_alpha() {
  double worst = 0.0;
  for (int n = 0; n <= 8; ++n)
    for (double lt = -3.0; lt <= 1e-9; lt += 0.25) {
      const auto s = metrology::small_alpha_fisher(n, std::pow(10.0, lt));
      worst = std::max(worst, std::abs(s.fi_limit - s.fi_approx) / s.fi_limit);
    }
  return {worst < 0.05, fmt("max relative deviation = %.2e", worst)};
}

Outcome crossover() {
  const bool exact = metrology::crossover_eta(0, 1) == 0.5;
  double worst = 0.0;
  for (auto [n, m] : {std::pair{0, 1}, std::pair{1, 2}, std::pair{2, 3}}) {
    auto diff = [&](double eta) {
      const double t = -std::log(eta);
      return metrology::small_alpha_fisher(m, t).fi_limit - metrology::small_alpha_fisher(n, t).fi_limit;
    };
    double lo = 0.05, hi = 0.999;  // m loses at lo, wins at hi
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (diff(mid) > 0.0 ? hi : lo) = mid;
    }
    worst = std::max(worst, std::abs(0.5 * (lo + hi) / metrology::crossover_eta(n, m) - 1.0));
  }
  return {exact && worst < 0.02, fmt("eta(0,1) exact: %s, max relative offset of FI intersections = %.2e",
                                     exact ? "yes" : "no", worst)};
}

Outcome force_budget() {
  const metrology::ForceParams p{16.2e-9, 2.0 * std::numbers::pi * 5.023e9, 90e-6, 210e-6, 0.0, 4.0};
  const auto s = metrology::force_sensitivity(p);
  const double f = s.delta_f0_per_sqrt_hz * 1e15;
  const bool ok = std::abs(f / 63.2 - 1.0) < 0.01 && std::abs(s.x_zpf / 3.2e-19 - 1.0) < 0.02;
  return {ok, fmt("%.2f fN/sqrt(Hz), x_zpf = %.3e m", f, s.x_zpf)};
}

// Shared by criteria 9 and 10.
std::vector<qng::ThresholdCurve> g_curves;

qng::QngPoint point_of(const FockDistribution& pops, int n) {
  double low = 0.0;
  for (int m = 0; m <= n; ++m) low += pops[m];
  return {n, pops[n], std::max(0.0, 1.0 - low)};
}

Outcome qng_envelope() {
  const qng::OptimizerConfig cfg;
  const auto grid = qng::default_a_grid();
  for (int n = 1; n <= 6; ++n) g_curves.push_back(qng::threshold_curve(n, grid, cfg));

  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  double worst_state = -INFINITY, worst_mix = -INFINITY, worst_pbar = 0.0;
  std::ostringstream pbars;
  for (int n = 1; n <= 6; ++n) {
    const auto& curve = g_curves[static_cast<std::size_t>(n - 1)];
    std::vector<qng::QngPoint> pts;
    while (pts.size() < 1000) {
      CoreStateParams p;
      p.alpha = std::polar(2.5 * std::sqrt(u(rng)), 2.0 * std::numbers::pi * u(rng));
      p.r = std::polar(1.0 * u(rng), 2.0 * std::numbers::pi * u(rng));
      p.coeffs.clear();
      double norm = 0.0;
      for (int m = 0; m < n; ++m) {
        p.coeffs.emplace_back(g(rng), g(rng));
        norm += std::norm(p.coeffs.back());
      }
      for (auto& c : p.coeffs) c /= std::sqrt(norm);
      const auto cs = core_state(p, FockBasis(80));
      if (cs.edge_warning) continue;
      pts.push_back(point_of(cs.state.populations(), n));
      worst_state = std::max(worst_state, qng::qng_witness(pts.back(), curve).margin);
    }
    for (int k = 0; k < 1000; ++k) {
      // Mixtures of three random members.
      double w[3], s = 0.0;
      for (double& x : w) s += (x = -std::log(u(rng)));
      qng::QngPoint mix{n, 0.0, 0.0};
      for (double x : w) {
        const auto& q = pts[static_cast<std::size_t>(u(rng) * 1000) % 1000];
        mix.p_n += x / s * q.p_n;
        mix.p_tail += x / s * q.p_tail;
      }
      worst_mix = std::max(worst_mix, qng::qng_witness(mix, curve).margin);
    }
    const double pbar = qng::threshold_pbar(n, cfg);
    worst_pbar = std::max(worst_pbar, std::abs(curve.points.front().f_bar - pbar));
    pbars << (n > 1 ? ", " : "") << fmt("%.5f", pbar);
  }
  const double grid_oracle = oracle::pbar1_grid();
  const double multi_oracle = oracle::pbar1_multistart(16, 7);
  const double oracle_gap = std::abs(grid_oracle - multi_oracle);
  const bool ok = worst_state <= qng::kWitnessTolerance && worst_mix <= qng::kWitnessTolerance &&
                  worst_pbar < 1e-3 && oracle_gap < 1e-3 &&
                  std::abs(g_curves[0].points.front().f_bar - grid_oracle) < 1e-3;
  return {ok, fmt("max margin: states %.2e, mixtures %.2e; |F(0) - P_bar| = %.1e; P_bar_1 oracles %.5f / %.5f; "
                  "P_bar_1..6 = %s",
                  worst_state, worst_mix, worst_pbar, grid_oracle, multi_oracle, pbars.str().c_str())};
}

Outcome qng_depth_order() {
  if (g_curves.size() != 6) return {false, "curves unavailable (criterion 9 failed to run)"};
  const double kappa = 1.0 / 85.0;
  double prev = INFINITY, worst_eq = 0.0;
  bool decreasing = true;
  std::ostringstream depths;
  for (int n = 1; n <= 6; ++n) {
    const auto& curve = g_curves[static_cast<std::size_t>(n - 1)];
    const auto d = qng::qng_depth(FockDistribution::fock(n), n, curve);
    decreasing = decreasing && d.violated_at_unit_transmittance && d.depth_db < prev;
    prev = d.depth_db;
    depths << (n > 1 ? ", " : "") << fmt("%.3f", d.depth_db);
    // Time-based route: wait t* under loss and compare.
    const double t = qng::depth_time_equivalent(d.eta_min, kappa);
    const auto damped = damp_evolve(DensityMatrix::fock(n, FockBasis(n + 2)), NoiseParams{kappa, 0.0, 0.0}, t);
    const auto lossy = binomial_loss(FockDistribution::fock(n), LossChannel(d.eta_min));
    for (int m = 0; m <= n; ++m) worst_eq = std::max(worst_eq, std::abs(lossy[m] - damped.matrix()(m, m).real()));
    worst_eq = std::max(worst_eq, std::abs(loss_db(kappa, t) - d.depth_db));
  }
  return {decreasing && worst_eq < 1e-12,
          fmt("depth_db(|1>..|6>) = %s; binomial vs time route max diff %.1e", depths.str().c_str(), worst_eq)};
}

Outcome grape_desk() {
  // Exact gradient on a three-segment toy problem.
  control::SystemParams toy;
  toy.omega_q = toy.omega_a = toy.omega_d = 0.0;
  toy.anharm = 0.7;
  toy.g = 0.4;
  toy.phonon_levels = 5;
  CVector init = CVector::Zero(toy.dim()), target = CVector::Zero(toy.dim());
  init(toy.index(0, 0)) = 1.0;
  target(toy.index(0, 1)) = 1.0;
  const control::GrapeProblem prob(control::cqad_hamiltonian(toy), 0.7, init, target);
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  std::vector<cplx> s(3);
  for (auto& x : s) x = 0.5 * cplx(g(rng), g(rng));
  std::vector<cplx> grad;
  prob.fidelity_gradient(s, grad);
  double worst_grad = 0.0;
  for (std::size_t k = 0; k < 3; ++k)
    for (cplx dir : {cplx(1, 0), cplx(0, 1)}) {
      auto up = s, dn = s;
      up[k] += 1e-6 * dir;
      dn[k] -= 1e-6 * dir;
      const double fd = (prob.fidelity(up) - prob.fidelity(dn)) / 2e-6;
      const double an = dir.real() != 0.0 ? grad[k].real() : grad[k].imag();
      worst_grad = std::max(worst_grad, std::abs(an - fd) / std::max(std::abs(fd), 1e-3));
    }

  std::ostringstream detail;
  bool fid_ok = true, green_ok = true, orange_ok = true;
  double prev_green = INFINITY;
  for (int n = 1; n <= 3; ++n) {
    control::SystemParams p;
    p.phonon_levels = n + 4;
    const double duration = (0.4 + 0.8 * n) * 1e-6;
    const auto res = control::grape_optimize(n, duration, p);
    const auto chain = control::simulate_preparation_chain(res.pulse, n, p, control::DeviceNoise::device(), true);
    fid_ok = fid_ok && res.fidelity >= 0.99 && duration <= 4e-6;
    green_ok = green_ok && chain.fidelity_prepared < prev_green;
    orange_ok = orange_ok && chain.fidelity_readout < chain.fidelity_prepared;
    prev_green = chain.fidelity_prepared;
    detail << fmt("n=%d %.1fus F=%.5f green=%.3f orange=%.3f; ", n, duration * 1e6, res.fidelity,
                  chain.fidelity_prepared, chain.fidelity_readout);
  }
  detail << fmt("gradient rel err %.1e", worst_grad);
  return {fid_ok && green_ok && orange_ok && worst_grad < 1e-5, detail.str()};
}

Outcome rpn_round_trip() {
  control::SystemParams p;
  p.qubit_levels = 2;
  p.phonon_levels = 8;
  const auto grid = control::uniform_grid(16e-6, 321);
  const auto noise = control::DeviceNoise::device();
  const auto basis = control::rpn_basis(6, p, noise, grid);
  auto signal_of = [&](const std::vector<double>& probs) {
    std::vector<double> full(8, 0.0);
    std::copy(probs.begin(), probs.end(), full.begin());
    return control::rpn_signal(DensityMatrix::diagonal(FockDistribution(full), FockBasis(8)), p, noise, grid);
  };
  double worst_clean = 0.0;
  const std::vector<std::vector<double>> mixes{
      {0, 0, 0.6, 0.4}, {0.1, 0.9}, {0.05, 0.1, 0.15, 0.2, 0.25, 0.2, 0.05}, {0, 0, 0, 0, 0, 0, 1.0}};
  for (const auto& mix : mixes) {
    const auto fit = control::rpn_fit(signal_of(mix), basis);
    for (int n = 0; n <= 6; ++n)
      worst_clean = std::max(worst_clean, std::abs(fit.dist[n] - (n < static_cast<int>(mix.size()) ? mix[static_cast<std::size_t>(n)] : 0.0)));
  }
  const std::vector<double> truth{0.1, 0.2, 0.6, 0.1};
  const auto clean = signal_of(truth);
  std::normal_distribution<double> g(0.0, 0.01);
  double sum_l1 = 0.0, max_l1 = 0.0;
  for (unsigned seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    auto noisy = clean;
    for (double& v : noisy) v += g(rng);
    const auto fit = control::rpn_fit(noisy, basis);
    double l1 = 0.0;
    for (int n = 0; n <= 6; ++n) l1 += std::abs(fit.dist[n] - (n < 4 ? truth[static_cast<std::size_t>(n)] : 0.0));
    sum_l1 += l1;
    max_l1 = std::max(max_l1, l1);
  }
  const double mean_l1 = sum_l1 / 100.0;
  return {worst_clean < 1e-6 && mean_l1 < 0.02,
          fmt("noiseless max error %.1e; sigma = 0.01: mean L1 %.4f, max L1 %.4f over 100 seeds", worst_clean,
              mean_l1, max_l1)};
}

Outcome hierarchy() {
  const auto alpha = linspace(0.01, 3.0, 300);
  const NoiseParams ro{1.0 / 89.0, 0.0, 0.0};
  double best6 = 0.0, best_t = 0.0;
  for (double t = 8.0; t <= 12.0 + 1e-9; t += 0.25) {
    const double f = metrology::damped_fock_fisher(6, ro, t, alpha).fi_max;
    if (f > best6) {
      best6 = f;
      best_t = t;
    }
  }
  const double f3 = metrology::damped_fock_fisher(3, ro, 10.0, alpha).fi_max;
  const bool claim = best6 > metrology::qfi_fock(3);

  double worst_measured = 0.0;
  int count = 0;
  std::ostringstream per_n;
  for (int n = 1; n <= 6; ++n) {
    const auto path = std::filesystem::path(FOCKQNG_DATA_DIR) / ("apparent_n" + std::to_string(n) + ".json");
    const auto data = io::read_distribution(path);
    const double f = metrology::fisher_profile(data.dist, alpha).fi_max;
    worst_measured = std::max(worst_measured, f);
    per_n << (n > 1 ? ", " : "") << fmt("%.2f", f);
    ++count;
  }
  const bool below = count == 6 && worst_measured < metrology::qfi_fock(2);
  return {claim && below,
          fmt("max_t fi_max(damped |6>) = %.2f at t_ro = %.2f us (needs > 28; damped |3> at 10 us: %.2f); "
              "measured-style fi_max n=1..6 = %s (needs < 20)",
              best6, best_t, f3, per_n.str().c_str())};
}

}  // namespace

// Optional arguments select criteria by number; default is all of them.
int main(int argc, char** argv) {
  std::vector<bool> selected(14, argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= 13) selected[static_cast<std::size_t>(k)] = true;
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"overlap oracle equivalence", overlap_oracle},
      {"pure-Fock FI saturation", fock_fi_saturation},
      {"analytic channel vs integrator", channel_vs_integrator},
      {"Fock decay law tau_1/n", fock_decay_law},
      {"binomial/damping equivalence", binomial_equivalence},
      {"small-alpha approximation", small_alpha},
      {"crossover transmittance", crossover},
      {"force budget", force_budget},
      {"QNG envelope property", qng_envelope},
      {"QNG depth ordering", qng_depth_order},
      {"GRAPE desk-scale", grape_desk},
      {"RPN round trip", rpn_round_trip},
      {"Fisher hierarchy claim", hierarchy},
  };
  int failed = 0;
  int ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i + 1]) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), dt);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria failed\n", failed, ran);
  return failed;
}

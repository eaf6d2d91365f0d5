#include "fockqng/metrology.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fockqng::metrology {

double qfi_fock(int n) {
  if (n < 0) throw std::domain_error("qfi_fock: n must be >= 0");
  return 4.0 * (2.0 * n + 1.0);
}

namespace {

/// A(m, k) = <m|D(x)|k> for m in [0, rows), k in the support of the input.
RMatrix amplitude_table(int rows, int support, double x) {
  RMatrix amp(rows, support);
  for (int m = 0; m < rows; ++m)
    for (int k = 0; k < support; ++k) amp(m, k) = displacement_amplitude(m, k, x);
  return amp;
}

int auto_cutoff(int support, double x) {
  return support + 24 + static_cast<int>(std::ceil(4.0 * x * x + 8.0 * x * std::sqrt(support + 1.0)));
}

struct Terms {
  std::vector<double> term;   // contribution per outcome m
  std::vector<double> dp_dpk; // unused unless gradients requested
  int small = 0;
  bool common_zero = false;
};

/// Per-outcome FI terms; optionally the derivative of F with respect to each P_k.
Terms fisher_terms(const FockDistribution& dist, double x, int m_max, RVector* grad) {
  const int support = dist.size();
  const RMatrix amp = amplitude_table(m_max + 2, support, x);
  Terms t;
  t.term.assign(static_cast<std::size_t>(m_max + 1), 0.0);
  if (grad) *grad = RVector::Zero(support);
  for (int m = 0; m <= m_max; ++m) {
    double num = 0.0, den = 0.0, dsq = 0.0;
    for (int k = 0; k < support; ++k) {
      const double pk = dist[k];
      if (pk == 0.0) continue;
      const double a = amp(m, k);
      double da = -std::sqrt(m + 1.0) * amp(m + 1, k);
      if (m > 0) da += std::sqrt(static_cast<double>(m)) * amp(m - 1, k);
      num += pk * 2.0 * a * da;
      den += pk * a * a;
      dsq += pk * da * da;
    }
    if (den < 1e-14) ++t.small;
    if (den > 1e-300) {
      t.term[static_cast<std::size_t>(m)] = num * num / den;
      if (grad) {
        for (int k = 0; k < support; ++k) {
          const double a = amp(m, k);
          double da = -std::sqrt(m + 1.0) * amp(m + 1, k);
          if (m > 0) da += std::sqrt(static_cast<double>(m)) * amp(m - 1, k);
          (*grad)(k) += 2.0 * num * (2.0 * a * da) / den - num * num * a * a / (den * den);
        }
      }
    } else if (dsq > 0.0) {
      t.common_zero = true;
    }
  }
  return t;
}

}  // namespace

FisherResult fisher_displacement(const FockDistribution& dist, double alpha, int m_max) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::domain_error("fisher_displacement: alpha must be positive (use fisher_zero_limit)");
  if (dist.size() == 0) throw std::domain_error("fisher_displacement: empty distribution");
  const int cutoff = m_max < 0 ? auto_cutoff(dist.size(), alpha) : m_max;
  if (cutoff < 6) throw std::domain_error("fisher_displacement: m_max must be >= 6");

  FisherResult res;
  res.alpha = alpha;
  Terms t = fisher_terms(dist, alpha, cutoff, nullptr);
  if (t.common_zero) {
    res.nudged = true;
    res.alpha = alpha + 1e-9;
    t = fisher_terms(dist, res.alpha, cutoff, nullptr);
  }
  double total = 0.0, head = 0.0;
  for (int m = 0; m <= cutoff; ++m) {
    total += t.term[static_cast<std::size_t>(m)];
    if (m == cutoff - 5) head = total;
  }
  if (std::abs(total - head) > 1e-6 * std::max(total, 1e-300)) {
    std::ostringstream msg;
    msg << "fisher_displacement: FI sum not converged at m_max = " << cutoff << " (alpha "
        << alpha << ", last five terms " << total - head << " of " << total << ")";
    throw ConvergenceError(msg.str());
  }
  res.fi = total;
  res.terms_used = cutoff + 1;
  res.small_terms = t.small;
  return res;
}

FisherWithError fisher_with_uncertainty(const FockDistribution& dist,
                                        std::span<const double> sigma, double alpha) {
  if (static_cast<int>(sigma.size()) != dist.size())
    throw std::invalid_argument("fisher_with_uncertainty: sigma length differs from distribution");
  const auto base = fisher_displacement(dist, alpha);
  RVector grad;
  fisher_terms(dist, base.alpha, base.terms_used - 1, &grad);
  double var = 0.0;
  for (int k = 0; k < dist.size(); ++k) var += grad(k) * grad(k) * sigma[static_cast<std::size_t>(k)] * sigma[static_cast<std::size_t>(k)];
  return FisherWithError{base.fi, std::sqrt(var)};
}

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw std::domain_error("fisher_profile: empty alpha grid");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw std::domain_error("fisher_profile: alpha grid must be positive");
    if (k > 0 && !(grid[k] > grid[k - 1]))
      throw std::domain_error("fisher_profile: alpha grid must be ascending");
  }
}

void summarize(FisherProfile& p) {
  p.fi_max = *std::max_element(p.fi.begin(), p.fi.end());
  for (std::size_t k = 0; k < p.fi.size(); ++k) {
    if (p.fi[k] >= p.fi_max * (1.0 - 1e-9)) {
      p.d0 = p.alpha[k];
      break;
    }
  }
}

}  // namespace

FisherProfile fisher_profile(const FockDistribution& dist, std::span<const double> alpha_grid) {
  check_grid(alpha_grid);
  FisherProfile p;
  p.alpha.assign(alpha_grid.begin(), alpha_grid.end());
  p.fi.assign(alpha_grid.size(), 0.0);
  const int len = static_cast<int>(alpha_grid.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < len; ++k) {
    try {
      p.fi[static_cast<std::size_t>(k)] =
          fisher_displacement(dist, alpha_grid[static_cast<std::size_t>(k)]).fi;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  summarize(p);
  return p;
}

FisherProfile fisher_profile_serial(const FockDistribution& dist,
                                    std::span<const double> alpha_grid) {
  check_grid(alpha_grid);
  FisherProfile p;
  p.alpha.assign(alpha_grid.begin(), alpha_grid.end());
  for (double a : alpha_grid) p.fi.push_back(fisher_displacement(dist, a).fi);
  summarize(p);
  return p;
}

double fisher_zero_limit(const FockDistribution& dist) {
  // FI(x) is even in x; structure appears where x^2 is comparable to the
  // population ratio between neighbouring occupied levels, so the sequence
  // starts well below the smallest such ratio.
  double scale = 1.0;
  for (int m = 0; m < dist.size(); ++m) {
    const double pm = dist[m];
    if (pm <= 0.0) continue;
    const double nb = std::max(dist[m - 1] * m, dist[m + 1] * (m + 1.0));
    if (nb > 1e-12) scale = std::min(scale, pm / nb);
  }
  const double x0 = std::clamp(std::sqrt(1e-3 * scale), 1e-8, 1e-2);

  constexpr int kLevels = 5;
  double table[kLevels][kLevels];
  for (int k = 0; k < kLevels; ++k) {
    table[k][0] = fisher_displacement(dist, x0 / std::pow(2.0, k)).fi;
    for (int j = 1; j <= k; ++j) {
      const double f = std::pow(4.0, j) - 1.0;
      table[k][j] = table[k][j - 1] + (table[k][j - 1] - table[k - 1][j - 1]) / f;
    }
  }
  const double best = table[kLevels - 1][kLevels - 1];
  const double prev = table[kLevels - 2][kLevels - 2];
  if (std::abs(best - prev) > 1e-6 * std::max(std::abs(best), 1.0)) {
    std::ostringstream msg;
    msg << "fisher_zero_limit: Richardson extrapolation unstable (x0 = " << x0 << ", estimates "
        << prev << " vs " << best << ", raw F(x0) = " << table[0][0] << ")";
    throw ConvergenceError(msg.str());
  }
  return best;
}

SmallAlphaFisher small_alpha_fisher(int n, double t_over_t1) {
  if (n < 0) throw std::domain_error("small_alpha_fisher: n must be >= 0");
  if (!(t_over_t1 >= 0.0)) throw std::domain_error("small_alpha_fisher: t must be >= 0");
  const double eta = std::exp(-t_over_t1);
  const auto dist = binomial_loss(FockDistribution::fock(n), LossChannel(eta));
  return SmallAlphaFisher{fisher_zero_limit(dist), 4.0 * (n + 1.0) * std::exp(-n * t_over_t1)};
}

FisherProfile damped_fock_fisher(int n, const NoiseParams& noise, double t,
                                 std::span<const double> alpha_grid) {
  if (n < 0) throw std::domain_error("damped_fock_fisher: n must be >= 0");
  const FockBasis basis(std::max(n + 1, 2));
  const auto rho = damp_evolve(DensityMatrix::fock(n, basis), noise, t);
  return fisher_profile(rho.populations(), alpha_grid);
}

double crossover_eta(int n, int m) {
  if (n < 0 || m <= n) throw std::domain_error("crossover_eta: need m > n >= 0");
  return std::pow((1.0 + n) / (1.0 + m), 1.0 / (m - n));
}

double fisher_reparam(double fi_alpha, Reparam target, double alpha) {
  if (!(fi_alpha >= 0.0)) throw std::domain_error("fisher_reparam: FI must be >= 0");
  switch (target) {
    case Reparam::theta:
      return fi_alpha / 2.0;
    case Reparam::nbar:
      if (!(std::abs(alpha) > 0.0))
        throw std::domain_error("fisher_reparam: nbar needs alpha != 0");
      return fi_alpha / (4.0 * alpha * alpha);
  }
  throw std::invalid_argument("fisher_reparam: unknown target");
}

DensityMatrix phase_average(const DensityMatrix& rho) {
  return DensityMatrix(CMatrix(rho.matrix().diagonal().asDiagonal()));
}

double avg_qfi_bound(double nbar) {
  if (!(nbar >= 0.0)) throw std::domain_error("avg_qfi_bound: nbar must be >= 0");
  return 4.0 * (1.0 + 2.0 * nbar);
}

double zero_point_fluctuation(double mass_kg, double omega_rad_s) {
  if (!(mass_kg > 0.0) || !(omega_rad_s > 0.0))
    throw std::domain_error("zero_point_fluctuation: mass and omega must be positive");
  return std::sqrt(kHbar / (2.0 * mass_kg * omega_rad_s));
}

void ForceParams::validate() const {
  if (!(mass > 0.0) || !(omega > 0.0)) throw std::domain_error("ForceParams: mass, omega must be > 0");
  if (!(t_probe > 0.0)) throw std::domain_error("ForceParams: t_probe must be > 0");
  if (!(t_dead >= 0.0)) throw std::domain_error("ForceParams: t_dead must be >= 0");
  if (!(fq > 0.0)) throw std::domain_error("ForceParams: fq must be > 0");
  if (total_time > 0.0 && total_time < t_cycle() * (1.0 - 1e-12))
    throw std::domain_error("ForceParams: total_time shorter than one cycle");
}

ForceSensitivity force_sensitivity(const ForceParams& params) {
  params.validate();
  const double tc = params.t_cycle();
  const double total = params.total_time > 0.0 ? params.total_time : tc;
  ForceSensitivity out;
  out.x_zpf = zero_point_fluctuation(params.mass, params.omega);
  out.nu = total / tc;
  out.delta_f0_per_sqrt_hz =
      (2.0 * kHbar / out.x_zpf) * (tc / params.t_probe) / std::sqrt(total * params.fq);
  return out;
}

cplx displacement_from_force(double f0, double x_zpf, double t, double phi) {
  const cplx i{0.0, 1.0};
  return i * f0 * x_zpf * t * std::polar(1.0, phi) / (2.0 * kHbar);
}

}  // namespace fockqng::metrology

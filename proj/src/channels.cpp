#include "fockqng/channels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/numeric/odeint.hpp>

namespace fockqng {

namespace {

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double binomial_pmf(int n, int k, double eta) {
  if (eta == 1.0) return k == n ? 1.0 : 0.0;
  if (eta == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(log_choose(n, k) + k * std::log(eta) + (n - k) * std::log1p(-eta));
}

}  // namespace

void NoiseParams::validate() const {
  if (!(kappa >= 0.0) || !(gamma_phi >= 0.0))
    throw std::domain_error("NoiseParams: kappa and gamma_phi must be nonnegative");
}

NoiseParams NoiseParams::from_t1_t2star(double t1, double t2star) {
  if (!(t1 > 0.0) || !(t2star > 0.0))
    throw std::domain_error("NoiseParams::from_t1_t2star: times must be positive");
  NoiseParams p;
  p.kappa = 1.0 / t1;
  p.gamma_phi = std::max(0.0, 1.0 / t2star - 0.5 / t1);
  return p;
}

LossChannel::LossChannel(double transmittance) : eta(transmittance) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::domain_error("LossChannel: transmittance " + std::to_string(eta) +
                            " outside [0, 1]");
}

LossChannel LossChannel::from_decay(double kappa, double t) {
  if (kappa < 0.0 || t < 0.0) throw std::domain_error("LossChannel::from_decay: negative input");
  return LossChannel(std::exp(-kappa * t));
}

DensityMatrix damp_evolve(const DensityMatrix& rho0, const NoiseParams& noise, double t,
                          int ell_max) {
  noise.validate();
  if (t < 0.0) throw std::domain_error("damp_evolve: negative time");
  const int d = rho0.dim();
  const CMatrix& r0 = rho0.matrix();
  if (t == 0.0) return rho0;
  const double kt = noise.kappa * t;
  // log(1 - e^{-kappa t}); -inf when kappa = 0 so only ell = 0 survives.
  const double log_loss = kt > 0.0 ? std::log(-std::expm1(-kt)) : -INFINITY;
  const int lmax = ell_max < 0 ? d - 1 : std::min(ell_max, d - 1);

  CMatrix out = CMatrix::Zero(d, d);
  for (int m = 0; m < d; ++m) {
    for (int n = 0; n < d; ++n) {
      cplx acc{0.0, 0.0};
      const int top = std::min(lmax, d - 1 - std::max(m, n));
      for (int l = 0; l <= top; ++l) {
        const cplx src = r0(m + l, n + l);
        if (src == cplx{0.0, 0.0}) continue;
        if (l > 0 && !std::isfinite(log_loss)) break;
        const double logw =
            0.5 * (log_choose(n + l, l) + log_choose(m + l, l)) + (l > 0 ? l * log_loss : 0.0);
        acc += std::exp(logw) * src;
      }
      const double k = static_cast<double>(m - n);
      const double decay = std::exp(-(m + n) * 0.5 * kt - k * k * noise.gamma_phi * t);
      out(m, n) = std::polar(decay, -noise.omega * k * t) * acc;
    }
  }
  return DensityMatrix(std::move(out));
}

FockDistribution binomial_loss(const FockDistribution& dist, const LossChannel& channel) {
  const int len = dist.size();
  std::vector<double> out(static_cast<std::size_t>(len), 0.0);
  for (int n = 0; n < len; ++n) {
    const double pn = dist[n];
    if (pn == 0.0) continue;
    for (int m = 0; m <= n; ++m)
      out[static_cast<std::size_t>(m)] += pn * binomial_pmf(n, m, channel.eta);
  }
  return FockDistribution(std::move(out));
}

double loss_db(double kappa, double t) {
  if (kappa < 0.0 || t < 0.0) throw std::domain_error("loss_db: negative input");
  return 10.0 * kappa * t / std::log(10.0);
}

double transmittance_to_db(double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::domain_error("transmittance_to_db: eta outside (0, 1]");
  return -10.0 * std::log10(eta);
}

// ---------------------------------------------------------------------------

LindbladGenerator::LindbladGenerator(CMatrix hamiltonian, std::vector<CMatrix> collapse_ops)
    : collapse_(std::move(collapse_ops)) {
  const auto d = hamiltonian.rows();
  if (hamiltonian.cols() != d) throw std::invalid_argument("LindbladGenerator: H not square");
  const cplx i{0.0, 1.0};
  h_eff_ = hamiltonian;
  rate_scale_ = hamiltonian.cwiseAbs().rowwise().sum().maxCoeff();
  for (const auto& l : collapse_) {
    if (l.rows() != d || l.cols() != d)
      throw std::invalid_argument("LindbladGenerator: collapse operator dimension " +
                                  std::to_string(l.rows()) + "x" + std::to_string(l.cols()) +
                                  " does not match H of dim " + std::to_string(d));
    const CMatrix ldl = l.adjoint() * l;
    h_eff_ -= 0.5 * i * ldl;
    rate_scale_ += ldl.cwiseAbs().rowwise().sum().maxCoeff();
  }
}

void LindbladGenerator::apply(const CMatrix& rho, CMatrix& drho) const {
  const cplx i{0.0, 1.0};
  drho.noalias() = -i * (h_eff_ * rho);
  drho.noalias() += i * (rho * h_eff_.adjoint());
  for (const auto& l : collapse_) drho.noalias() += l * rho * l.adjoint();
}

namespace {

using OdeState = std::vector<cplx>;

struct LindbladRhs {
  const LindbladGenerator* gen;
  mutable CMatrix rho, drho;

  void operator()(const OdeState& x, OdeState& dxdt, double /*t*/) const {
    const int d = gen->dim();
    rho = Eigen::Map<const CMatrix>(x.data(), d, d);
    gen->apply(rho, drho);
    Eigen::Map<CMatrix>(dxdt.data(), d, d) = drho;
  }
};

template <typename Observer>
void integrate_grid(const LindbladGenerator& gen, OdeState& x, std::span<const double> times,
                    const IntegratorTolerance& tol, Observer obs) {
  namespace odeint = boost::numeric::odeint;
  const int d = gen.dim();
  LindbladRhs rhs{&gen, CMatrix(d, d), CMatrix(d, d)};
  const double span = times.back() - times.front();
  double dt0 = gen.rate_scale() > 0.0 ? 0.01 / gen.rate_scale() : span;
  dt0 = std::min(dt0, span > 0.0 ? span : 1.0);
  auto stepper = odeint::make_dense_output(tol.abs, tol.rel, odeint::runge_kutta_dopri5<OdeState>());
  try {
    odeint::integrate_times(stepper, rhs, x, times.begin(), times.end(), dt0, obs,
                            odeint::max_step_checker(tol.max_steps));
  } catch (const std::exception& e) {
    std::ostringstream msg;
    msg << "lindblad integrator failed (dim " << d << ", span " << span << ", rtol " << tol.rel
        << ", atol " << tol.abs << ", max_steps " << tol.max_steps << "): " << e.what();
    throw ConvergenceError(msg.str());
  }
}

}  // namespace

CMatrix lindblad_evolve(const LindbladGenerator& gen, const CMatrix& rho, double duration,
                        const IntegratorTolerance& tol) {
  if (rho.rows() != gen.dim() || rho.cols() != gen.dim())
    throw std::invalid_argument("lindblad_evolve: state dimension mismatch");
  if (duration < 0.0) throw std::domain_error("lindblad_evolve: negative duration");
  if (duration == 0.0) return rho;
  OdeState x(rho.data(), rho.data() + rho.size());
  const double times[2] = {0.0, duration};
  integrate_grid(gen, x, times, tol, [](const OdeState&, double) {});
  return Eigen::Map<const CMatrix>(x.data(), gen.dim(), gen.dim());
}

std::vector<DensityMatrix> lindblad_propagate(const CMatrix& hamiltonian,
                                              const std::vector<CMatrix>& collapse_ops,
                                              const DensityMatrix& rho0,
                                              std::span<const double> t_grid,
                                              const IntegratorTolerance& tol) {
  if (t_grid.empty() || t_grid.front() != 0.0)
    throw std::invalid_argument("lindblad_propagate: t_grid must start at 0");
  if (!std::is_sorted(t_grid.begin(), t_grid.end()))
    throw std::invalid_argument("lindblad_propagate: t_grid must be ascending");
  if (hamiltonian.rows() != rho0.dim())
    throw std::invalid_argument("lindblad_propagate: H dim " + std::to_string(hamiltonian.rows()) +
                                " vs rho dim " + std::to_string(rho0.dim()));
  const LindbladGenerator gen(hamiltonian, collapse_ops);
  const int d = gen.dim();

  std::vector<DensityMatrix> out;
  out.reserve(t_grid.size());
  if (t_grid.size() == 1) {
    out.push_back(rho0);
    return out;
  }
  OdeState x(rho0.matrix().data(), rho0.matrix().data() + rho0.matrix().size());
  std::vector<CMatrix> raw;
  raw.reserve(t_grid.size());
  integrate_grid(gen, x, t_grid, tol, [&](const OdeState& s, double) {
    raw.emplace_back(Eigen::Map<const CMatrix>(s.data(), d, d));
  });
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double drift = std::abs(raw[k].trace().real() - 1.0);
    if (drift > 1e-8) {
      std::ostringstream msg;
      msg << "lindblad_propagate: trace drift " << drift << " at t = " << t_grid[k];
      throw ConvergenceError(msg.str());
    }
    try {
      out.emplace_back(std::move(raw[k]));
    } catch (const std::domain_error& e) {
      std::ostringstream msg;
      msg << "lindblad_propagate: invalid state at t = " << t_grid[k] << ": " << e.what();
      throw ConvergenceError(msg.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<DecayFit> fock_decay_times(std::span<const int> n_list, double kappa, int samples) {
  if (!(kappa > 0.0)) throw std::domain_error("fock_decay_times: kappa must be positive");
  if (samples < 3) throw std::domain_error("fock_decay_times: need at least 3 samples");
  std::vector<DecayFit> fits;
  for (int n : n_list) {
    if (n < 1) throw std::domain_error("fock_decay_times: n must be >= 1");
    const FockBasis basis(n + 1);
    const DensityMatrix rho0 = DensityMatrix::fock(n, basis);
    const NoiseParams noise{kappa, 0.0, 0.0};
    // Sample until the expected P_n reaches ~1e-3, safely above the fit floor.
    const double t_end = std::log(1e3) / (n * kappa);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < samples; ++k) {
      const double t = t_end * k / (samples - 1);
      const double pn = damp_evolve(rho0, noise, t).matrix()(n, n).real();
      if (pn <= 1e-4) continue;
      const double y = std::log(pn);
      pts.emplace_back(t, y);
      sx += t;
      sy += y;
      sxx += t * t;
      sxy += t * y;
    }
    const double m = static_cast<double>(pts.size());
    const double denom = m * sxx - sx * sx;
    if (pts.size() < 3 || denom <= 0.0)
      throw ConvergenceError("fock_decay_times: only " + std::to_string(pts.size()) +
                             " usable points for n = " + std::to_string(n));
    const double slope = (m * sxy - sx * sy) / denom;
    const double icpt = (sy - slope * sx) / m;
    double ss = 0.0;
    for (const auto& [t, y] : pts) ss += (y - icpt - slope * t) * (y - icpt - slope * t);
    const double rms = std::sqrt(ss / m);
    if (!(slope < 0.0) || rms > 1e-3) {
      std::ostringstream msg;
      msg << "fock_decay_times: exponential fit failed for n = " << n << " (slope " << slope
          << ", rms log residual " << rms << ")";
      throw ConvergenceError(msg.str());
    }
    fits.push_back(DecayFit{n, -1.0 / slope, rms, static_cast<int>(pts.size())});
  }
  return fits;
}

}  // namespace fockqng

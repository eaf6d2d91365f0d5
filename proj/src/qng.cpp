#include "fockqng/qng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gsl/gsl_multimin.h>
#include <gsl/gsl_qrng.h>

#include "fockqng/channels.hpp"

namespace fockqng::qng {

void QngPoint::validate() const {
  if (n < 1) throw std::domain_error("QngPoint: n must be >= 1");
  if (!(p_n >= 0.0 && p_n <= 1.0) || !(p_tail >= 0.0 && p_tail <= 1.0))
    throw std::domain_error("QngPoint: probabilities outside [0, 1]");
  if (p_n + p_tail > 1.0 + 1e-12)
    throw std::domain_error("QngPoint: unphysical point, P_n + P_{n+1}^+ = " +
                            std::to_string(p_n + p_tail) + " > 1");
}

QngPoint QngPoint::from_distribution(const FockDistribution& dist, int n) {
  QngPoint p{n, dist[n], dist.tail_from(n + 1)};
  p.validate();
  return p;
}

void OptimizerConfig::validate() const {
  if (restarts < 1) throw std::domain_error("OptimizerConfig: restarts must be >= 1");
  if (!(alpha_box > 0.0) || !(r_box > 0.0))
    throw std::domain_error("OptimizerConfig: search boxes must be positive");
  if (dim < 8) throw std::domain_error("OptimizerConfig: dim must be >= 8");
  if (!(tolerance > 0.0) || max_iterations < 1)
    throw std::domain_error("OptimizerConfig: invalid stopping criteria");
}

std::vector<double> default_a_grid(int count, double a_max) {
  if (count < 2 || !(a_max > 1e-3)) throw std::domain_error("default_a_grid: invalid range");
  std::vector<double> grid{0.0};
  const double lo = std::log(1e-3), hi = std::log(a_max);
  for (int k = 0; k < count - 1; ++k) grid.push_back(std::exp(lo + (hi - lo) * k / (count - 2)));
  return grid;
}

double ThresholdCurve::max_p_n() const {
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, p.p_n);
  return best;
}

// ---------------------------------------------------------------------------
// Core-state amplitudes from ladder recurrences.
//
//   <m+1|D|k> = (sqrt(k) <m|D|k-1> + alpha <m|D|k>) / sqrt(m+1)
//   <m|S|j+1> = (sqrt(m) <m-1|S|j> + e^{-i theta} sinh(s) sqrt(j) <m|S|j-1>)
//               / (cosh(s) sqrt(j+1))
// with r = s e^{i theta}.

CoreAmplitudes core_amplitudes(cplx alpha, cplx r, int n, int levels) {
  if (n < 1) throw std::domain_error("core_amplitudes: n must be >= 1");
  if (levels < n + 2) throw std::domain_error("core_amplitudes: too few levels");
  const int k_len = levels;

  // Displacement rows 0..n over intermediate levels.
  CMatrix d(n + 1, k_len);
  const double x2 = std::norm(alpha);
  const cplx step = -std::conj(alpha);
  d(0, 0) = std::exp(-0.5 * x2);
  for (int k = 1; k < k_len; ++k) d(0, k) = d(0, k - 1) * step / std::sqrt(static_cast<double>(k));
  for (int m = 0; m < n; ++m) {
    const double inv = 1.0 / std::sqrt(m + 1.0);
    d(m + 1, 0) = alpha * d(m, 0) * inv;
    for (int k = 1; k < k_len; ++k)
      d(m + 1, k) = (std::sqrt(static_cast<double>(k)) * d(m, k - 1) + alpha * d(m, k)) * inv;
  }

  // Squeezing columns 0..n-1.
  const double s = std::abs(r);
  const cplx phase = s > 0.0 ? r / s : cplx{1.0, 0.0};
  const double ch = std::cosh(s), sh = std::sinh(s), th = std::tanh(s);
  CMatrix sq = CMatrix::Zero(k_len, n);
  sq(0, 0) = 1.0 / std::sqrt(ch);
  for (int k = 2; k < k_len; k += 2)
    sq(k, 0) = sq(k - 2, 0) * (-phase * th) * std::sqrt((k - 1.0) / k);
  const cplx back = std::conj(phase) * sh;
  for (int j = 0; j + 1 < n; ++j) {
    const double denom = ch * std::sqrt(j + 1.0);
    for (int m = 0; m < k_len; ++m) {
      cplx v = 0.0;
      if (m > 0) v += std::sqrt(static_cast<double>(m)) * sq(m - 1, j);
      if (j > 0) v += back * std::sqrt(static_cast<double>(j)) * sq(m, j - 1);
      sq(m, j + 1) = v / denom;
    }
  }

  double leak = 0.0;
  for (int j = 0; j < n; ++j) leak = std::max(leak, 1.0 - sq.col(j).squaredNorm());
  for (int m = 0; m <= n; ++m) leak = std::max(leak, 1.0 - d.row(m).squaredNorm());
  return CoreAmplitudes{d * sq, std::max(leak, 0.0)};
}

double core_witness_value(double a, int n, cplx alpha, cplx r, int levels, ThresholdPoint* out) {
  const CoreAmplitudes amp = core_amplitudes(alpha, r, n, levels);
  const CMatrix& g = amp.rows;
  // F = a + (1 - a) P_n - a sum_{m<n} P_m with P_m = |g_m . c|^2.
  CMatrix w = a * CMatrix::Identity(n, n);
  w += (1.0 - a) * g.row(n).adjoint() * g.row(n);
  for (int m = 0; m < n; ++m) w -= a * g.row(m).adjoint() * g.row(m);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(w);
  const double value = es.eigenvalues()(n - 1);
  if (out) {
    CVector c = es.eigenvectors().col(n - 1);
    Eigen::Index big = 0;
    c.cwiseAbs().maxCoeff(&big);
    c *= std::conj(c(big)) / std::abs(c(big));
    double below = 0.0;
    for (int m = 0; m < n; ++m) below += std::norm(g.row(m).dot(c.conjugate()));
    const double pn = std::norm(g.row(n).dot(c.conjugate()));
    out->a = a;
    out->f_bar = value;
    out->p_n = std::clamp(pn, 0.0, 1.0);
    out->p_tail = std::clamp(1.0 - below - pn, 0.0, 1.0 - out->p_n);
    out->alpha = alpha.real();
    out->r = r;
    out->coeffs.assign(c.data(), c.data() + c.size());
    out->leakage = amp.leakage;
  }
  return value;
}

// ---------------------------------------------------------------------------
// Multi-start Nelder-Mead over (|alpha|, |r|, arg r).

namespace {

struct SearchSpace {
  double alpha_box, r_box;

  // Periodic maps keep every simplex vertex inside the boxes.
  cplx alpha(const double* u) const { return {alpha_box * 0.5 * (1.0 - std::cos(u[0])), 0.0}; }
  cplx r(const double* u) const {
    return std::polar(r_box * 0.5 * (1.0 - std::cos(u[1])), u[2]);
  }
  std::array<double, 3> from_unit(const std::array<double, 3>& q) const {
    return {std::acos(1.0 - 2.0 * q[0]), std::acos(1.0 - 2.0 * q[1]), std::numbers::pi * q[2]};
  }
};

struct LocalResult {
  double value = -INFINITY;
  std::array<double, 3> u{};
  bool converged = false;
};

struct ObjectiveCtx {
  double a;
  int n;
  int levels;
  SearchSpace space;
};

double negative_witness(const gsl_vector* v, void* p) {
  const auto* ctx = static_cast<const ObjectiveCtx*>(p);
  const double u[3] = {gsl_vector_get(v, 0), gsl_vector_get(v, 1), gsl_vector_get(v, 2)};
  return -core_witness_value(ctx->a, ctx->n, ctx->space.alpha(u), ctx->space.r(u), ctx->levels);
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* s) const { gsl_multimin_fminimizer_free(s); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

LocalResult local_search(double a, int n, const OptimizerConfig& cfg,
                         const std::array<double, 3>& start) {
  ObjectiveCtx ctx{a, n, cfg.dim, SearchSpace{cfg.alpha_box, cfg.r_box}};
  gsl_multimin_function fn{&negative_witness, 3, &ctx};
  std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(3)), step(gsl_vector_alloc(3));
  for (int i = 0; i < 3; ++i) gsl_vector_set(x.get(), i, start[static_cast<std::size_t>(i)]);
  gsl_vector_set_all(step.get(), 0.25);
  std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> s(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3));
  gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), step.get());

  LocalResult res;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), cfg.tolerance) ==
        GSL_SUCCESS) {
      res.converged = true;
      break;
    }
  }
  const gsl_vector* best = gsl_multimin_fminimizer_x(s.get());
  for (int i = 0; i < 3; ++i) res.u[static_cast<std::size_t>(i)] = gsl_vector_get(best, i);
  res.value = -gsl_multimin_fminimizer_minimum(s.get());
  return res;
}

/// Quasi-random starts: Sobol points with a seeded Cranley-Patterson shift, so
/// the starts for R restarts are a prefix of those for R + 1.
std::vector<std::array<double, 3>> start_points(const OptimizerConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::array<double, 3> shift{unif(rng), unif(rng), unif(rng)};
  std::unique_ptr<gsl_qrng, decltype(&gsl_qrng_free)> q(gsl_qrng_alloc(gsl_qrng_sobol, 3),
                                                        &gsl_qrng_free);
  const SearchSpace space{cfg.alpha_box, cfg.r_box};
  std::vector<std::array<double, 3>> starts;
  for (int i = 0; i < cfg.restarts; ++i) {
    double v[3];
    gsl_qrng_get(q.get(), v);
    std::array<double, 3> unit{};
    for (int k = 0; k < 3; ++k) unit[static_cast<std::size_t>(k)] = std::fmod(v[k] + shift[static_cast<std::size_t>(k)], 1.0);
    starts.push_back(space.from_unit(unit));
  }
  return starts;
}

// For a >= 1, P_n + a P_tail <= a (P_n + P_tail <= 1), and the bound is
// approached as |alpha| grows, so no search is needed.
ThresholdPoint asymptote_point(double a, int restarts) {
  ThresholdPoint pt;
  pt.a = a;
  pt.f_bar = a;
  pt.p_n = 0.0;
  pt.p_tail = 1.0;
  pt.asymptote = true;
  pt.converged = true;
  pt.restarts = restarts;
  return pt;
}

LocalResult search_task(const std::vector<double>& a_grid, int n, const OptimizerConfig& cfg,
                        const std::vector<std::array<double, 3>>& starts, int task) {
  const int nr = cfg.restarts;
  const double a = a_grid[static_cast<std::size_t>(task / nr)];
  if (a >= 1.0) return {};
  return local_search(a, n, cfg, starts[static_cast<std::size_t>(task % nr)]);
}

/// Picks the best restart per a (lowest index wins ties), lets each a try the
/// optima found for the other a values, and assembles the curve points.
ThresholdCurve assemble(int n, const std::vector<double>& a_grid, const OptimizerConfig& cfg,
                        const std::vector<LocalResult>& results, bool parallel) {
  const int na = static_cast<int>(a_grid.size());
  const int nr = cfg.restarts;
  const SearchSpace space{cfg.alpha_box, cfg.r_box};

  std::vector<LocalResult> best(static_cast<std::size_t>(na));
  for (int ia = 0; ia < na; ++ia) {
    LocalResult b;
    bool any_converged = false;
    for (int ir = 0; ir < nr; ++ir) {
      const auto& r = results[static_cast<std::size_t>(ia * nr + ir)];
      any_converged |= r.converged;
      if (r.value > b.value) b = r;
    }
    b.converged = any_converged;
    best[static_cast<std::size_t>(ia)] = b;
  }

  std::vector<ThresholdPoint> points(static_cast<std::size_t>(na));
  auto finish = [&](int ia) {
    const double a = a_grid[static_cast<std::size_t>(ia)];
    if (a >= 1.0) {
      points[static_cast<std::size_t>(ia)] = asymptote_point(a, nr);
      return;
    }
    LocalResult own = best[static_cast<std::size_t>(ia)];
    LocalResult cand = own;
    for (int ib = 0; ib < na; ++ib) {
      if (ib == ia || a_grid[static_cast<std::size_t>(ib)] >= 1.0) continue;
      const auto& u = best[static_cast<std::size_t>(ib)].u;
      const double v = core_witness_value(a, n, space.alpha(u.data()), space.r(u.data()), cfg.dim);
      if (v > cand.value + 1e-12) {
        cand.value = v;
        cand.u = u;
      }
    }
    if (cand.value > own.value + 1e-12) {
      LocalResult polished = local_search(a, n, cfg, cand.u);
      own = polished.value > cand.value ? polished : cand;
      own.converged = own.converged || best[static_cast<std::size_t>(ia)].converged;
    }

    ThresholdPoint pt;
    core_witness_value(a, n, space.alpha(own.u.data()), space.r(own.u.data()), cfg.dim, &pt);
    if (pt.leakage > kEdgeLeakThreshold) {
      const double again = core_witness_value(a, n, space.alpha(own.u.data()),
                                              space.r(own.u.data()), 2 * cfg.dim);
      if (std::abs(again - pt.f_bar) > 1e-6) {
        std::ostringstream msg;
        msg << "threshold for n = " << n << ", a = " << a << " unstable under truncation: "
            << pt.f_bar << " vs " << again << " at doubled dim";
        throw ConvergenceError(msg.str());
      }
    }
    pt.restarts = nr;
    pt.converged = own.converged;
    // F_bar(a) >= a: the point (P_n, P_tail) = (0, 1) is approached by core
    // states with |alpha| -> infinity, and for a >= 1 nothing exceeds it.
    if (a >= pt.f_bar) {
      pt.f_bar = a;
      pt.p_n = 0.0;
      pt.p_tail = 1.0;
      pt.asymptote = true;
    }
    points[static_cast<std::size_t>(ia)] = std::move(pt);
  };

  if (parallel) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int ia = 0; ia < na; ++ia) {
      try {
        finish(ia);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  } else {
    for (int ia = 0; ia < na; ++ia) finish(ia);
  }
  return ThresholdCurve{n, std::move(points), cfg};
}

void check_inputs(int n, const std::vector<double>& a_grid, const OptimizerConfig& cfg) {
  cfg.validate();
  if (n < 1) throw std::domain_error("threshold: n must be >= 1");
  if (cfg.dim < n + 8) throw std::domain_error("threshold: dim too small for n");
  if (a_grid.empty()) throw std::domain_error("threshold: empty a grid");
  for (double a : a_grid)
    if (!(a >= 0.0)) throw std::domain_error("threshold: a values must be >= 0");
}

}  // namespace

ThresholdCurve threshold_curve(int n, const std::vector<double>& a_grid,
                               const OptimizerConfig& cfg) {
  check_inputs(n, a_grid, cfg);
  const auto starts = start_points(cfg);
  const int na = static_cast<int>(a_grid.size());
  const int nr = cfg.restarts;
  std::vector<LocalResult> results(static_cast<std::size_t>(na * nr));
#pragma omp parallel for schedule(dynamic)
  for (int task = 0; task < na * nr; ++task)
    results[static_cast<std::size_t>(task)] = search_task(a_grid, n, cfg, starts, task);
  return assemble(n, a_grid, cfg, results, true);
}

ThresholdCurve threshold_curve_serial(int n, const std::vector<double>& a_grid,
                                      const OptimizerConfig& cfg) {
  check_inputs(n, a_grid, cfg);
  const auto starts = start_points(cfg);
  const int na = static_cast<int>(a_grid.size());
  const int nr = cfg.restarts;
  std::vector<LocalResult> results(static_cast<std::size_t>(na * nr));
  for (int task = 0; task < na * nr; ++task)
    results[static_cast<std::size_t>(task)] = search_task(a_grid, n, cfg, starts, task);
  return assemble(n, a_grid, cfg, results, false);
}

double threshold_pbar(int n, const OptimizerConfig& cfg) {
  return threshold_curve(n, {0.0}, cfg).points.front().f_bar;
}

// ---------------------------------------------------------------------------

WitnessResult qng_witness(const QngPoint& point, const ThresholdCurve& curve, double tolerance) {
  point.validate();
  if (point.n != curve.n)
    throw std::invalid_argument("qng_witness: point is for n = " + std::to_string(point.n) +
                                ", curve for n = " + std::to_string(curve.n));
  if (curve.points.empty()) throw std::invalid_argument("qng_witness: empty curve");
  WitnessResult res;
  res.margin = -INFINITY;
  for (const auto& p : curve.points) {
    const double m = point.p_n + p.a * point.p_tail - p.f_bar;
    if (m > res.margin) {
      res.margin = m;
      res.best_a = p.a;
    }
  }
  res.violated = res.margin > tolerance;
  return res;
}

DepthResult qng_depth(const FockDistribution& dist, int n, const ThresholdCurve& curve,
                      double tolerance) {
  auto violates = [&](double eta) {
    const auto lossy = binomial_loss(dist, LossChannel(eta));
    return qng_witness(QngPoint::from_distribution(lossy, n), curve, tolerance).violated;
  };
  DepthResult res;
  if (!violates(1.0)) return res;
  res.violated_at_unit_transmittance = true;
  double lo = 0.0, hi = 1.0;  // violation holds at hi, fails at lo
  if (violates(0.0)) {
    hi = 0.0;
  } else {
    while (hi - lo > 1e-7) {
      const double mid = 0.5 * (lo + hi);
      (violates(mid) ? hi : lo) = mid;
    }
  }
  res.eta_min = hi;
  res.depth_db = hi > 0.0 ? transmittance_to_db(hi) : INFINITY;
  return res;
}

double depth_time_equivalent(double eta_min, double kappa) {
  if (!(eta_min > 0.0 && eta_min <= 1.0))
    throw std::domain_error("depth_time_equivalent: eta_min must be in (0, 1]");
  if (!(kappa > 0.0)) throw std::domain_error("depth_time_equivalent: kappa must be positive");
  return -std::log(eta_min) / kappa;
}

}  // namespace fockqng::qng

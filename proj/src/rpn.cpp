#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fockqng/control.hpp"

namespace fockqng::control {

std::vector<double> uniform_grid(double t_max, int count) {
  if (!(t_max > 0.0)) throw std::domain_error("uniform_grid: t_max must be > 0");
  if (count < 2) throw std::domain_error("uniform_grid: count must be >= 2");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) t[static_cast<std::size_t>(k)] = t_max * k / (count - 1);
  return t;
}

namespace {

void check_grid(std::span<const double> t_grid, double g) {
  if (t_grid.size() < 2 || t_grid.front() != 0.0)
    throw std::invalid_argument("rpn: t_grid must start at 0 and have >= 2 points");
  if (!std::is_sorted(t_grid.begin(), t_grid.end()))
    throw std::invalid_argument("rpn: t_grid must be ascending");
  const double two_periods = 2.0 * std::numbers::pi / g;
  if (t_grid.back() < two_periods * (1.0 - 1e-9)) {
    std::ostringstream msg;
    msg << "rpn: t_grid ends at " << t_grid.back() << " s, shorter than two vacuum Rabi periods ("
        << two_periods << " s)";
    throw std::domain_error(msg.str());
  }
}

/// P_e(t) for a joint initial state, qubit index 1 summed over phonon levels.
std::vector<double> excited_population(const CMatrix& rho0, const SystemParams& params,
                                       const DeviceNoise& noise,
                                       std::span<const double> t_grid,
                                       const IntegratorTolerance& tol) {
  const Hamiltonian h = cqad_hamiltonian(params);
  const auto ops = collapse_operators(noise, params.qubit_levels, params.phonon_levels);
  const auto states = lindblad_propagate(h.drift, ops, DensityMatrix(rho0), t_grid, tol);
  std::vector<double> pe(states.size(), 0.0);
  for (std::size_t k = 0; k < states.size(); ++k) {
    double s = 0.0;
    for (int n = 0; n < params.phonon_levels; ++n)
      s += states[k].matrix()(params.index(1, n), params.index(1, n)).real();
    pe[k] = std::clamp(s, 0.0, 1.0);
  }
  return pe;
}

CMatrix excited_fock(int n, const SystemParams& params) {
  CMatrix rho = CMatrix::Zero(params.dim(), params.dim());
  rho(params.index(1, n), params.index(1, n)) = 1.0;
  return rho;
}

void check_basis_inputs(int n_max, const SystemParams& params, std::span<const double> t_grid) {
  params.validate();
  if (n_max < 0) throw std::domain_error("rpn_basis: n_max must be >= 0");
  if (params.phonon_levels < n_max + 2)
    throw std::domain_error("rpn_basis: phonon_levels must be >= n_max + 2");
  check_grid(t_grid, params.g);
}

}  // namespace

RpnBasis rpn_basis(int n_max, const SystemParams& params, const DeviceNoise& noise,
                   std::span<const double> t_grid, const IntegratorTolerance& tol) {
  check_basis_inputs(n_max, params, t_grid);
  RpnBasis basis;
  basis.t_grid.assign(t_grid.begin(), t_grid.end());
  basis.curves.resize(static_cast<Eigen::Index>(t_grid.size()), n_max + 1);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int n = 0; n <= n_max; ++n) {
    try {
      const auto pe = excited_population(excited_fock(n, params), params, noise, t_grid, tol);
      for (std::size_t k = 0; k < pe.size(); ++k)
        basis.curves(static_cast<Eigen::Index>(k), n) = pe[k];
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return basis;
}

RpnBasis rpn_basis_serial(int n_max, const SystemParams& params, const DeviceNoise& noise,
                          std::span<const double> t_grid, const IntegratorTolerance& tol) {
  check_basis_inputs(n_max, params, t_grid);
  RpnBasis basis;
  basis.t_grid.assign(t_grid.begin(), t_grid.end());
  basis.curves.resize(static_cast<Eigen::Index>(t_grid.size()), n_max + 1);
  for (int n = 0; n <= n_max; ++n) {
    const auto pe = excited_population(excited_fock(n, params), params, noise, t_grid, tol);
    for (std::size_t k = 0; k < pe.size(); ++k) basis.curves(static_cast<Eigen::Index>(k), n) = pe[k];
  }
  return basis;
}

std::vector<double> rpn_signal(const DensityMatrix& phonon, const SystemParams& params,
                               const DeviceNoise& noise, std::span<const double> t_grid,
                               const IntegratorTolerance& tol) {
  params.validate();
  check_grid(t_grid, params.g);
  if (phonon.dim() != params.phonon_levels)
    throw std::invalid_argument("rpn_signal: phonon state dim " + std::to_string(phonon.dim()) +
                                " vs phonon_levels " + std::to_string(params.phonon_levels));
  CMatrix qubit = CMatrix::Zero(params.qubit_levels, params.qubit_levels);
  qubit(1, 1) = 1.0;
  return excited_population(linalg::kron(qubit, phonon.matrix()), params, noise, t_grid, tol);
}

RVector nnls(const RMatrix& a, const RVector& b, int max_iterations) {
  const Eigen::Index m = a.rows(), n = a.cols();
  if (b.size() != m) throw std::invalid_argument("nnls: row count mismatch");
  const int limit = max_iterations < 0 ? static_cast<int>(30 * n + 50) : max_iterations;
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() * a.cwiseAbs().colwise().sum().maxCoeff() *
                     static_cast<double>(std::max(m, n));

  RVector x = RVector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  auto solve_passive = [&](RVector& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    RMatrix ap(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) ap.col(static_cast<Eigen::Index>(c)) = a.col(idx[c]);
    const RVector sp = ap.completeOrthogonalDecomposition().solve(b);
    s = RVector::Zero(n);
    for (std::size_t c = 0; c < idx.size(); ++c) s(idx[c]) = sp(static_cast<Eigen::Index>(c));
  };

  RVector w = a.transpose() * (b - a * x);
  int iter = 0;
  while (true) {
    Eigen::Index j_max = -1;
    double w_max = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > w_max) {
        w_max = w(j);
        j_max = j;
      }
    if (j_max < 0) break;
    if (++iter > limit) throw ConvergenceError("nnls: iteration limit reached");
    passive[static_cast<std::size_t>(j_max)] = true;

    RVector s;
    solve_passive(s);
    if (s(j_max) <= 0.0) {
      // Rounding-level gradient; the column cannot enter. Skip it until x moves.
      passive[static_cast<std::size_t>(j_max)] = false;
      w(j_max) = 0.0;
      continue;
    }
    while (true) {
      double min_s = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)]) min_s = std::min(min_s, s(j));
      if (min_s > 0.0) break;
      if (++iter > limit) throw ConvergenceError("nnls: iteration limit reached");
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0)
          alpha = std::min(alpha, x(j) - s(j) > 0.0 ? x(j) / (x(j) - s(j)) : 0.0);
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
      solve_passive(s);
    }
    x = s;
    w = a.transpose() * (b - a * x);
  }
  return x;
}

RpnFit rpn_fit(std::span<const double> measured, const RpnBasis& basis,
               std::span<const double> sigma) {
  const Eigen::Index m = basis.curves.rows(), k = basis.curves.cols();
  if (static_cast<Eigen::Index>(measured.size()) != m)
    throw std::invalid_argument("rpn_fit: measured curve has " + std::to_string(measured.size()) +
                                " points, basis has " + std::to_string(m));
  if (!sigma.empty() && sigma.size() != measured.size())
    throw std::invalid_argument("rpn_fit: sigma length differs from the measured curve");
  const bool weighted = !sigma.empty();

  RMatrix a = basis.curves;
  RVector b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    b(i) = measured[static_cast<std::size_t>(i)];
    if (!std::isfinite(b(i))) throw std::domain_error("rpn_fit: non-finite measurement");
    if (weighted) {
      const double s = sigma[static_cast<std::size_t>(i)];
      if (!(s > 0.0)) throw std::domain_error("rpn_fit: sigma entries must be > 0");
      a.row(i) /= s;
      b(i) /= s;
    }
  }

  RpnFit fit;
  Eigen::JacobiSVD<RMatrix> svd(a);
  const auto& sv = svd.singularValues();
  fit.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                 : std::numeric_limits<double>::infinity();
  if (fit.condition_number > 1e8) {
    std::ostringstream msg;
    msg << "rpn_fit: basis condition number " << fit.condition_number
        << " exceeds 1e8; use a longer t_grid or a smaller n_max";
    throw ConvergenceError(msg.str());
  }

  RVector x = nnls(a, b);
  if (x.sum() > 1.0) {
    // Enforce sum = 1 with a heavily weighted extra row.
    const double weight = 1e4 * a.norm();
    RMatrix aug(m + 1, k);
    aug.topRows(m) = a;
    aug.row(m).setConstant(weight);
    RVector baug(m + 1);
    baug.head(m) = b;
    baug(m) = weight;
    x = nnls(aug, baug);
    if (x.sum() > 1.0) x /= x.sum();
    fit.sum_constrained = true;
  }

  const RVector resid = a * x - b;
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - k, 1));
  const double scale = weighted ? 1.0 : resid.squaredNorm() / dof;
  const RMatrix cov = (a.transpose() * a).inverse() * scale;
  fit.sigma.resize(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) fit.sigma[static_cast<std::size_t>(j)] = std::sqrt(std::max(cov(j, j), 0.0));

  RVector raw_resid = basis.curves * x;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = raw_resid(i) - measured[static_cast<std::size_t>(i)];
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(m));
  fit.dist = FockDistribution(std::vector<double>(x.data(), x.data() + x.size()));
  return fit;
}

}  // namespace fockqng::control

// fockqng command-line front end.
//
// Exit codes: 0 success, 1 malformed input or usage, 2 unphysical input,
// 3 numerical failure (an optimizer or integrator did not converge).

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fockqng/channels.hpp"
#include "fockqng/control.hpp"
#include "fockqng/io.hpp"
#include "fockqng/metrology.hpp"
#include "fockqng/qng.hpp"

namespace fs = std::filesystem;
using namespace fockqng;
using io::json;

namespace {

constexpr const char* kConfigEnv = "FOCKQNG_CONFIG";
constexpr const char* kCacheEnv = "FOCKQNG_CACHE";

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> dim;
  std::optional<int> jobs;
};

struct Context {
  Globals g;
  io::Config cfg;
  std::string config_source = "defaults";
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void load() {
    std::string path = g.config_path;
    if (path.empty())
      if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
    if (!path.empty()) {
      cfg = io::Config::load(path);
      config_source = path;
    }
    if (g.seed) {
      cfg.qng.seed = *g.seed;
      cfg.grape.seed = *g.seed;
    }
    if (g.jobs) {
      if (*g.jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
      omp_set_num_threads(*g.jobs);
    }
    if (g.dim && *g.dim < 2) throw std::invalid_argument("--dim must be >= 2");
    fs::create_directories(g.out);
  }

  fs::path out(const std::string& name) const { return fs::path(g.out) / name; }

  io::RunManifest manifest(const std::string& command, std::vector<std::string> inputs,
                           std::vector<std::string> outputs) const {
    io::RunManifest m;
    m.command = command;
    m.config = cfg.to_json();
    m.inputs = std::move(inputs);
    m.outputs = std::move(outputs);
    m.seed = cfg.qng.seed;
    m.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
  }

  /// Writes `report` with its manifest embedded and echoes it on stdout.
  void emit(const std::string& file, json report, const std::string& command,
            const std::vector<std::string>& inputs, std::vector<std::string> outputs) const {
    outputs.push_back(out(file).string());
    report["manifest"] = manifest(command, inputs, outputs).to_json();
    io::atomic_write(out(file), report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
  }
};

std::vector<double> a_grid(const io::Config& cfg) { return qng::default_a_grid(cfg.a_count, cfg.a_max); }

fs::path cache_dir(const Context& ctx, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kCacheEnv); env && *env) return env;
  return fs::path(ctx.g.out) / "cache";
}

qng::ThresholdCurve load_or_compute_curve(const Context& ctx, int n, const fs::path& dir,
                                          bool use_cache) {
  qng::OptimizerConfig oc = ctx.cfg.qng;
  if (ctx.g.dim) oc.dim = *ctx.g.dim;
  const auto grid = a_grid(ctx.cfg);
  const fs::path path = io::curve_cache_path(dir, n, oc, grid);
  if (use_cache && fs::exists(path)) {
    try {
      return io::curve_from_json(json::parse(io::read_text(path)));
    } catch (const std::exception& e) {
      std::cerr << "warning: ignoring unreadable cache entry " << path << ": " << e.what() << "\n";
    }
  }
  std::cerr << "computing threshold curve for n = " << n << " (" << grid.size() << " a values, "
            << oc.restarts << " restarts)\n";
  auto curve = qng::threshold_curve(n, grid, oc);
  if (use_cache) io::atomic_write(path, io::curve_to_json(curve, grid).dump() + "\n");
  return curve;
}

std::vector<int> default_orders(const FockDistribution& dist) {
  int best = 1;
  for (int n = 2; n < dist.size(); ++n)
    if (dist[n] > dist[best]) best = n;
  return {best};
}

// ---------------------------------------------------------------------------

int cmd_qng_threshold(Context& ctx, const std::vector<int>& orders, const std::string& cache,
                      bool no_cache) {
  json report;
  report["curves"] = json::array();
  std::vector<std::string> outputs;
  const auto grid = a_grid(ctx.cfg);
  for (int n : orders) {
    if (n < 1) throw std::domain_error("threshold order n must be >= 1");
    const auto curve = load_or_compute_curve(ctx, n, cache_dir(ctx, cache), !no_cache);
    const std::string csv = "threshold_n" + std::to_string(n) + ".csv";
    const std::string js = "threshold_n" + std::to_string(n) + ".json";
    io::atomic_write(ctx.out(csv), io::curve_to_csv(curve));
    json cj = io::curve_to_json(curve, grid);
    cj["manifest"] = ctx.manifest("qng threshold", {}, {ctx.out(csv).string(), ctx.out(js).string()}).to_json();
    io::atomic_write(ctx.out(js), cj.dump(2) + "\n");
    outputs.push_back(ctx.out(csv).string());
    outputs.push_back(ctx.out(js).string());
    report["curves"].push_back({{"n", n},
                                {"p_bar", curve.points.front().f_bar},
                                {"max_p_n", curve.max_p_n()},
                                {"points", curve.points.size()},
                                {"csv", ctx.out(csv).string()}});
  }
  ctx.emit("qng_threshold.json", report, "qng threshold", {}, outputs);
  return 0;
}

int cmd_qng_certify(Context& ctx, const std::string& input, std::vector<int> orders,
                    const std::string& cache, bool no_cache, bool with_depth,
                    std::optional<double> t1_us) {
  const auto data = io::read_distribution(input);
  if (orders.empty()) orders = default_orders(data.dist);
  const double t1 = (t1_us ? *t1_us : ctx.cfg.phonon_t1_us) * 1e-6;
  if (!(t1 > 0.0)) throw std::domain_error("--t1-us must be > 0");
  json results = json::array();
  for (int n : orders) {
    if (n < 1) throw std::domain_error("witness order n must be >= 1");
    const auto curve = load_or_compute_curve(ctx, n, cache_dir(ctx, cache), !no_cache);
    const auto point = qng::QngPoint::from_distribution(data.dist, n);
    const auto w = qng::qng_witness(point, curve);
    json r{{"n", n},
           {"p_n", point.p_n},
           {"p_tail", point.p_tail},
           {"violated", w.violated},
           {"margin", w.margin},
           {"best_a", w.best_a}};
    if (with_depth) {
      const auto d = qng::qng_depth(data.dist, n, curve);
      r["eta_min"] = d.eta_min;
      r["depth_db"] = d.depth_db;
      r["wait_time_us"] = d.violated_at_unit_transmittance
                              ? qng::depth_time_equivalent(d.eta_min, 1.0 / t1) * 1e6
                              : 0.0;
    }
    results.push_back(std::move(r));
  }
  json report{{"input", input}, {"results", results}};
  if (with_depth) report["t1_us"] = t1 * 1e6;
  const std::string name = with_depth ? "qng_depth" : "qng_witness";
  ctx.emit(name + ".json", report, with_depth ? "qng depth" : "qng witness", {input}, {});
  return 0;
}

int cmd_fisher(Context& ctx, const std::string& input, std::optional<int> fock,
               std::optional<double> t_us, bool readout, std::optional<double> t1_us,
               double a_min, double a_max, int a_count) {
  if (input.empty() == !fock.has_value())
    throw std::invalid_argument("give exactly one of --input or --fock");
  if (!(a_min > 0.0 && a_max > a_min) || a_count < 2)
    throw std::invalid_argument("alpha grid needs 0 < alpha-min < alpha-max and count >= 2");
  std::vector<double> grid(static_cast<std::size_t>(a_count));
  for (int k = 0; k < a_count; ++k)
    grid[static_cast<std::size_t>(k)] = a_min + (a_max - a_min) * k / (a_count - 1);

  double t = t_us ? *t_us * 1e-6 : 0.0;
  if (readout) t = ctx.cfg.readout_time_us * 1e-6;
  if (!(t >= 0.0)) throw std::domain_error("damping time must be >= 0");
  const double t1 = (t1_us ? *t1_us : ctx.cfg.phonon_t1_us) * 1e-6;
  const NoiseParams noise{1.0 / t1, 0.0, 0.0};

  FockDistribution dist;
  std::vector<double> sigma;
  if (fock) {
    if (*fock < 0) throw std::domain_error("--fock must be >= 0");
    const FockBasis basis(std::max(*fock + 1, 2));
    dist = damp_evolve(DensityMatrix::fock(*fock, basis), noise, t).populations();
  } else {
    auto data = io::read_distribution(input);
    dist = t > 0.0 ? binomial_loss(data.dist, LossChannel::from_decay(noise.kappa, t)) : data.dist;
    if (t == 0.0) sigma = data.sigma;
  }
  const auto prof = metrology::fisher_profile(dist, grid);

  std::ostringstream csv;
  csv << std::setprecision(17) << "alpha,fi\n";
  for (std::size_t k = 0; k < grid.size(); ++k) csv << prof.alpha[k] << ',' << prof.fi[k] << '\n';
  io::atomic_write(ctx.out("fisher_curve.csv"), csv.str());

  json report{{"fi_max", prof.fi_max},
              {"d0", prof.d0},
              {"damping_time_us", t * 1e6},
              {"t1_us", t1 * 1e6},
              {"coherent_reference", 4.0}};
  if (fock) {
    report["fock"] = *fock;
    report["qfi_undamped"] = metrology::qfi_fock(*fock);
  }
  if (!sigma.empty()) {
    const auto fe = metrology::fisher_with_uncertainty(dist, sigma, prof.d0);
    report["fi_at_d0_sigma"] = fe.sigma;
  }
  std::vector<std::string> inputs;
  if (!input.empty()) inputs.push_back(input);
  ctx.emit("fisher.json", report, "fisher", inputs, {ctx.out("fisher_curve.csv").string()});
  return 0;
}

int cmd_grape(Context& ctx, int n, double duration_us, bool shorten, double t_min_us,
              double resolution_ns, bool chain) {
  control::SystemParams p = ctx.cfg.system;
  p.phonon_levels = ctx.g.dim ? *ctx.g.dim : n + 4;
  const control::GrapeConfig& gc = ctx.cfg.grape;
  control::GrapeResult res;
  double duration = duration_us * 1e-6;
  if (shorten) {
    const auto s = control::grape_shortest(n, t_min_us * 1e-6, duration, resolution_ns * 1e-9, p, gc);
    res = s.result;
    duration = s.duration;
  } else {
    res = control::grape_optimize(n, duration, p, gc);
  }
  const auto h = control::cqad_hamiltonian(p);
  CVector init = CVector::Zero(p.dim());
  init(p.index(0, 0)) = 1.0;
  const double check = std::abs(control::propagate_pulse(res.pulse, h, init)(p.index(0, n)));

  const std::string pulse_file = "pulse_n" + std::to_string(n) + ".json";
  json pj = io::pulse_to_json(res.pulse);
  pj["manifest"] = ctx.manifest("grape", {}, {ctx.out(pulse_file).string()}).to_json();
  io::atomic_write(ctx.out(pulse_file), pj.dump(2) + "\n");

  json report{{"target_n", n},
              {"fidelity", res.fidelity},
              {"fidelity_check", check},
              {"target_fidelity", gc.target_fidelity},
              {"converged", res.converged},
              {"iterations", res.iterations},
              {"duration_us", duration * 1e6},
              {"max_amplitude_mhz", res.pulse.max_amplitude() / control::kTwoPi / 1e6},
              {"ceiling_mhz", gc.amplitude_ceiling / control::kTwoPi / 1e6},
              {"phonon_levels", p.phonon_levels},
              {"qubit_levels", p.qubit_levels}};
  std::vector<std::string> outputs{ctx.out(pulse_file).string()};
  if (chain) {
    control::ReadoutConfig ro = ctx.cfg.rpn;
    const auto c = control::simulate_preparation_chain(res.pulse, n, p, ctx.cfg.device_noise(), true, ro);
    report["fidelity_prepared"] = c.fidelity_prepared;
    report["fidelity_readout"] = c.fidelity_readout;
    report["residual_excitation"] = c.residual_excitation;
    const std::string prepared_file = "prepared_n" + std::to_string(n) + ".json";
    const std::string apparent_file = "apparent_n" + std::to_string(n) + ".json";
    io::atomic_write(ctx.out(prepared_file), io::distribution_to_json(c.prepared, {}).dump(2) + "\n");
    io::atomic_write(ctx.out(apparent_file), io::distribution_to_json(c.apparent, {}).dump(2) + "\n");
    outputs.push_back(ctx.out(prepared_file).string());
    outputs.push_back(ctx.out(apparent_file).string());
  }
  ctx.emit("grape_n" + std::to_string(n) + ".json", report, "grape", {}, outputs);
  return res.converged ? 0 : 3;
}

control::DeviceNoise rpn_noise(const Context& ctx, const std::string& model) {
  if (model == "device") return ctx.cfg.device_noise();
  if (model == "qubit") return {ctx.cfg.device_noise().qubit, NoiseParams{}};
  if (model == "none") return control::DeviceNoise::none();
  throw std::invalid_argument("--noise must be device, qubit or none");
}

control::SystemParams rpn_system(const Context& ctx, int n_max) {
  control::SystemParams p = ctx.cfg.system;
  p.qubit_levels = 2;
  p.phonon_levels = ctx.g.dim ? *ctx.g.dim : n_max + 2;
  return p;
}

int cmd_rpn_simulate(Context& ctx, int n_max, const std::string& input, std::optional<int> fock,
                     const std::string& noise_model, double noise_sigma) {
  if (!input.empty() && fock) throw std::invalid_argument("give at most one of --input or --fock");
  const control::SystemParams p = rpn_system(ctx, n_max);
  const auto noise = rpn_noise(ctx, noise_model);
  const auto grid = control::uniform_grid(ctx.cfg.rpn.t_max, ctx.cfg.rpn.points);
  const auto basis = control::rpn_basis(n_max, p, noise, grid);
  io::atomic_write(ctx.out("rpn_basis.csv"), io::basis_to_csv(basis));
  std::vector<std::string> outputs{ctx.out("rpn_basis.csv").string()}, inputs;

  json report{{"n_max", n_max}, {"noise", noise_model}, {"points", grid.size()},
              {"t_max_us", ctx.cfg.rpn.t_max * 1e6}};
  if (!input.empty() || fock) {
    FockDistribution dist;
    if (fock) {
      dist = FockDistribution::fock(*fock);
    } else {
      dist = io::read_distribution(input).dist;
      inputs.push_back(input);
    }
    if (dist.size() > n_max + 1) throw std::domain_error("distribution longer than n_max + 1");
    std::vector<double> probs(static_cast<std::size_t>(p.phonon_levels), 0.0);
    for (int k = 0; k < dist.size(); ++k) probs[static_cast<std::size_t>(k)] = dist[k];
    if (std::abs(dist.total() - 1.0) > 1e-9)
      throw std::domain_error("distribution must be normalized to simulate a signal");
    const auto rho = DensityMatrix::diagonal(FockDistribution(probs), FockBasis(p.phonon_levels));
    io::RpnData data;
    data.p_e = control::rpn_signal(rho, p, noise, grid);
    std::mt19937_64 rng(ctx.cfg.qng.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      data.t_us.push_back(grid[k] * 1e6);
      if (noise_sigma > 0.0) data.p_e[k] += noise_sigma * normal(rng);
      data.sigma.push_back(noise_sigma > 0.0 ? noise_sigma : 1.0);
    }
    io::atomic_write(ctx.out("rpn_signal.csv"), io::rpn_to_csv(data));
    outputs.push_back(ctx.out("rpn_signal.csv").string());
    report["noise_sigma"] = noise_sigma;
  }
  ctx.emit("rpn_simulate.json", report, "rpn simulate", inputs, outputs);
  return 0;
}

int cmd_rpn_fit(Context& ctx, const std::string& input, int n_max, const std::string& noise_model) {
  const auto data = io::parse_rpn_csv(io::read_text(input), input);
  std::vector<double> grid;
  for (double t : data.t_us) grid.push_back(t * 1e-6);
  if (grid.front() != 0.0) throw io::ParseError(input, 0, "first t_us must be 0");
  const control::SystemParams p = rpn_system(ctx, n_max);
  const auto basis = control::rpn_basis(n_max, p, rpn_noise(ctx, noise_model), grid);
  const auto fit = control::rpn_fit(data.p_e, basis, data.sigma);

  json report = io::distribution_to_json(fit.dist, fit.sigma);
  report["residual_rms"] = fit.residual_rms;
  report["condition_number"] = fit.condition_number;
  report["sum_constrained"] = fit.sum_constrained;
  report["noise"] = noise_model;
  ctx.emit("rpn_fit.json", report, "rpn fit", {input}, {});
  return 0;
}

int cmd_force(Context& ctx) {
  const auto s = metrology::force_sensitivity(ctx.cfg.force);
  json report{{"delta_f0_n_per_sqrt_hz", s.delta_f0_per_sqrt_hz},
              {"delta_f0_fn_per_sqrt_hz", s.delta_f0_per_sqrt_hz * 1e15},
              {"x_zpf_m", s.x_zpf},
              {"shots", s.nu},
              {"t_cycle_us", ctx.cfg.force.t_cycle() * 1e6}};
  ctx.emit("force.json", report, "force", {}, {});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fock-state non-Gaussianity, Fisher information and control toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  app.add_option("--config", ctx.g.config_path,
                 std::string("JSON config file (default: $") + kConfigEnv + ", then built-in)");
  app.add_option("--seed", ctx.g.seed, "Seed for optimizer restarts and synthetic noise");
  app.add_option("--out", ctx.g.out, "Output directory")->capture_default_str();
  app.add_option("--dim", ctx.g.dim, "Truncation: core-state levels (qng) or phonon levels (grape, rpn)");
  app.add_option("--jobs", ctx.g.jobs, "OpenMP threads");

  // qng
  auto* qng_cmd = app.add_subcommand("qng", "Non-Gaussianity thresholds and certification");
  qng_cmd->require_subcommand(1);
  std::vector<int> orders;
  std::string input, cache;
  bool no_cache = false;
  std::optional<double> t1_us;
  auto* thr = qng_cmd->add_subcommand("threshold", "Compute threshold curves F_bar_n(a)");
  thr->add_option("--n", orders, "Orders n (default 1..6)");
  thr->add_option("--cache-dir", cache, std::string("Curve cache (default: $") + kCacheEnv + " or <out>/cache)");
  thr->add_flag("--no-cache", no_cache, "Recompute and do not store");
  auto* wit = qng_cmd->add_subcommand("witness", "Test a distribution against the thresholds");
  auto* dep = qng_cmd->add_subcommand("depth", "Witness plus QNG depth under loss");
  for (auto* c : {wit, dep}) {
    c->add_option("--input", input, "Distribution file (.json or .csv)")->required();
    c->add_option("--n", orders, "Orders n (default: the dominant level n >= 1)");
    c->add_option("--cache-dir", cache, "Curve cache directory");
    c->add_flag("--no-cache", no_cache, "Recompute and do not store");
  }
  dep->add_option("--t1-us", t1_us, "T1 for the equivalent wait time (default: config phonon T1)");

  // fisher
  auto* fis = app.add_subcommand("fisher", "Fisher information of number-resolved displacement sensing");
  std::optional<int> fock;
  std::optional<double> t_us;
  bool readout = false;
  double a_min = 0.01, a_max = 3.0;
  int a_count = 300;
  fis->add_option("--input", input, "Distribution file");
  fis->add_option("--fock", fock, "Use Fock state |n>");
  fis->add_option("--t-us", t_us, "Amplitude-damping time before measurement (us)");
  fis->add_flag("--readout", readout, "Damp for the configured readout time");
  fis->add_option("--t1-us", t1_us, "T1 for the damping (default: config phonon T1)");
  fis->add_option("--alpha-min", a_min)->capture_default_str();
  fis->add_option("--alpha-max", a_max)->capture_default_str();
  fis->add_option("--alpha-count", a_count)->capture_default_str();

  // grape
  auto* gr = app.add_subcommand("grape", "Optimal-control pulse for |0,g> -> |n,g>");
  int target_n = 1;
  double duration_us = 2.0, t_min_us = 0.5, resolution_ns = 100.0;
  bool shorten = false, chain = false;
  gr->add_option("--n", target_n, "Target Fock state")->required();
  gr->add_option("--duration-us", duration_us, "Pulse duration (upper bound with --shorten)")->capture_default_str();
  gr->add_flag("--shorten", shorten, "Bisect for the shortest pulse reaching the target fidelity");
  gr->add_option("--t-min-us", t_min_us, "Lower bracket for --shorten")->capture_default_str();
  gr->add_option("--resolution-ns", resolution_ns, "Bisection resolution")->capture_default_str();
  gr->add_flag("--chain", chain, "Also simulate the noisy preparation and readout");

  // rpn
  auto* rpn = app.add_subcommand("rpn", "Resonant phonon-number readout");
  rpn->require_subcommand(1);
  int n_max = 8;
  std::string noise_model = "device";
  double noise_sigma = 0.0;
  auto* sim = rpn->add_subcommand("simulate", "Basis curves and, optionally, a synthetic signal");
  auto* fit = rpn->add_subcommand("fit", "Fit a measured P_e(t) trace");
  for (auto* c : {sim, fit}) {
    c->add_option("--n-max", n_max, "Largest Fock index in the basis")->capture_default_str();
    c->add_option("--noise", noise_model, "device | qubit | none")->capture_default_str();
  }
  sim->add_option("--input", input, "Distribution to simulate a signal for");
  sim->add_option("--fock", fock, "Simulate a signal for |n>");
  sim->add_option("--noise-sigma", noise_sigma, "Gaussian noise added to the signal")->capture_default_str();
  fit->add_option("--input", input, "CSV with t_us,p_e[,sigma]")->required();

  auto* force = app.add_subcommand("force", "Force-sensitivity budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    ctx.load();
    if (thr->parsed()) {
      if (orders.empty()) orders = {1, 2, 3, 4, 5, 6};
      return cmd_qng_threshold(ctx, orders, cache, no_cache);
    }
    if (wit->parsed()) return cmd_qng_certify(ctx, input, orders, cache, no_cache, false, std::nullopt);
    if (dep->parsed()) return cmd_qng_certify(ctx, input, orders, cache, no_cache, true, t1_us);
    if (fis->parsed()) return cmd_fisher(ctx, input, fock, t_us, readout, t1_us, a_min, a_max, a_count);
    if (gr->parsed()) return cmd_grape(ctx, target_n, duration_us, shorten, t_min_us, resolution_ns, chain);
    if (sim->parsed()) return cmd_rpn_simulate(ctx, n_max, input, fock, noise_model, noise_sigma);
    if (fit->parsed()) return cmd_rpn_fit(ctx, input, n_max, noise_model);
    if (force->parsed()) return cmd_force(ctx);
  } catch (const io::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "unphysical input: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "unphysical input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

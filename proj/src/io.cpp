#include "fockqng/io.hpp"

#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace fockqng::io {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         what),
      line_(line) {}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, const std::string& source, int line) {
  if (cell.empty()) throw ParseError(source, line, "empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ParseError(source, line, "not a number: '" + cell + "'");
  if (!std::isfinite(v)) throw ParseError(source, line, "non-finite value '" + cell + "'");
  return v;
}

/// Rows of a CSV with one of the accepted headers; returns the header index used.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

CsvTable parse_csv(const std::string& text, const std::string& source,
                   const std::vector<std::vector<std::string>>& headers) {
  CsvTable t;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    auto cells = split_csv(s);
    if (t.header.empty()) {
      for (const auto& h : headers)
        if (cells == h) t.header = h;
      if (t.header.empty()) {
        std::string expected;
        for (const auto& h : headers) {
          std::string joined;
          for (const auto& c : h) joined += (joined.empty() ? "" : ",") + c;
          expected += (expected.empty() ? "'" : " or '") + joined + "'";
        }
        throw ParseError(source, line, "expected header " + expected);
      }
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(source, line,
                       "expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, source, line));
    t.rows.push_back(std::move(row));
    t.lines.push_back(line);
  }
  if (t.header.empty()) throw ParseError(source, 0, "missing header");
  if (t.rows.empty()) throw ParseError(source, 0, "no data rows");
  return t;
}

int json_line(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k)
    if (text[k] == '\n') ++line;
  return line;
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, json_line(text, e.byte), e.what());
  }
}

std::vector<double> number_array(const json& j, const char* key, const std::string& source) {
  if (!j.contains(key)) throw ParseError(source, 0, std::string("missing key '") + key + "'");
  const json& arr = j.at(key);
  if (!arr.is_array()) throw ParseError(source, 0, std::string("'") + key + "' must be an array");
  std::vector<double> out;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    if (!arr[k].is_number())
      throw ParseError(source, 0, std::string("'") + key + "[" + std::to_string(k) + "]' is not a number");
    out.push_back(arr[k].get<double>());
  }
  return out;
}

}  // namespace

DistributionData parse_distribution_csv(const std::string& text, const std::string& source) {
  const auto t = parse_csv(text, source, {{"n", "p"}, {"n", "p", "sigma"}});
  const bool has_sigma = t.header.size() == 3;
  std::map<int, std::pair<double, double>> entries;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double nv = t.rows[r][0];
    if (nv < 0.0 || nv != std::floor(nv) || nv > 1e6)
      throw ParseError(source, t.lines[r], "n must be a nonnegative integer");
    const int n = static_cast<int>(nv);
    if (entries.count(n)) throw ParseError(source, t.lines[r], "duplicate n = " + std::to_string(n));
    entries[n] = {t.rows[r][1], has_sigma ? t.rows[r][2] : 0.0};
  }
  const int len = entries.rbegin()->first + 1;
  std::vector<double> p(static_cast<std::size_t>(len), 0.0), s;
  if (has_sigma) s.assign(static_cast<std::size_t>(len), 0.0);
  for (const auto& [n, v] : entries) {
    p[static_cast<std::size_t>(n)] = v.first;
    if (has_sigma) {
      if (v.second < 0.0) throw std::domain_error(source + ": negative sigma at n = " + std::to_string(n));
      s[static_cast<std::size_t>(n)] = v.second;
    }
  }
  return DistributionData{FockDistribution(std::move(p)), std::move(s)};
}

DistributionData parse_distribution_json(const std::string& text, const std::string& source) {
  const json j = parse_json_text(text, source);
  if (!j.is_object()) throw ParseError(source, 1, "top level must be an object");
  if (j.contains("schema") && j.at("schema") != "fockqng.distribution/1")
    throw ParseError(source, 0, "unsupported schema " + j.at("schema").dump());
  std::vector<double> p = number_array(j, "p", source);
  if (p.empty()) throw ParseError(source, 0, "'p' is empty");
  std::vector<double> s;
  if (j.contains("sigma")) {
    s = number_array(j, "sigma", source);
    if (s.size() != p.size()) throw ParseError(source, 0, "'sigma' and 'p' differ in length");
    for (double v : s)
      if (v < 0.0) throw std::domain_error(source + ": negative sigma");
  }
  return DistributionData{FockDistribution(std::move(p)), std::move(s)};
}

DistributionData read_distribution(const fs::path& path) {
  const std::string text = read_text(path);
  const std::string ext = path.extension().string();
  if (ext == ".json") return parse_distribution_json(text, path.string());
  if (ext == ".csv") return parse_distribution_csv(text, path.string());
  throw ParseError(path.string(), 0, "unknown extension (expected .json or .csv)");
}

json distribution_to_json(const FockDistribution& dist, const std::vector<double>& sigma) {
  json j;
  j["schema"] = "fockqng.distribution/1";
  j["p"] = std::vector<double>(dist.probs().begin(), dist.probs().end());
  if (!sigma.empty()) j["sigma"] = sigma;
  return j;
}

std::string distribution_to_csv(const FockDistribution& dist, const std::vector<double>& sigma) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  ss << (sigma.empty() ? "n,p\n" : "n,p,sigma\n");
  for (int n = 0; n < dist.size(); ++n) {
    ss << n << ',' << dist[n];
    if (!sigma.empty()) ss << ',' << sigma[static_cast<std::size_t>(n)];
    ss << '\n';
  }
  return ss.str();
}

json pulse_to_json(const control::Pulse& pulse) {
  json j;
  j["dt_ns"] = pulse.dt * 1e9;
  j["amplitude_units"] = "rad_per_s";
  j["frame"] = "rotating_at_omega_a";
  json samples = json::array();
  for (const cplx& s : pulse.samples) samples.push_back({{"i", s.real()}, {"q", s.imag()}});
  j["samples"] = std::move(samples);
  return j;
}

control::Pulse pulse_from_json(const json& j, const std::string& source) {
  if (!j.is_object() || !j.contains("dt_ns") || !j.contains("samples"))
    throw ParseError(source, 0, "pulse needs 'dt_ns' and 'samples'");
  if (j.value("amplitude_units", "rad_per_s") != "rad_per_s")
    throw ParseError(source, 0, "amplitude_units must be rad_per_s");
  if (j.value("frame", "rotating_at_omega_a") != "rotating_at_omega_a")
    throw ParseError(source, 0, "frame must be rotating_at_omega_a");
  control::Pulse p;
  if (!j.at("dt_ns").is_number()) throw ParseError(source, 0, "dt_ns must be a number");
  p.dt = j.at("dt_ns").get<double>() * 1e-9;
  for (const auto& s : j.at("samples")) {
    if (!s.is_object() || !s.contains("i") || !s.contains("q") || !s.at("i").is_number() ||
        !s.at("q").is_number())
      throw ParseError(source, 0, "each sample needs numeric 'i' and 'q'");
    p.samples.emplace_back(s.at("i").get<double>(), s.at("q").get<double>());
  }
  return p;
}

RpnData parse_rpn_csv(const std::string& text, const std::string& source) {
  const auto t = parse_csv(text, source, {{"t_us", "p_e", "sigma"}, {"t_us", "p_e"}});
  RpnData d;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    d.t_us.push_back(t.rows[r][0]);
    d.p_e.push_back(t.rows[r][1]);
    if (t.header.size() == 3) {
      if (!(t.rows[r][2] > 0.0)) throw ParseError(source, t.lines[r], "sigma must be > 0");
      d.sigma.push_back(t.rows[r][2]);
    }
    if (r > 0 && !(d.t_us[r] > d.t_us[r - 1]))
      throw ParseError(source, t.lines[r], "t_us must be strictly increasing");
  }
  return d;
}

std::string rpn_to_csv(const RpnData& data) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  const bool sig = !data.sigma.empty();
  ss << (sig ? "t_us,p_e,sigma\n" : "t_us,p_e\n");
  for (std::size_t k = 0; k < data.t_us.size(); ++k) {
    ss << data.t_us[k] << ',' << data.p_e[k];
    if (sig) ss << ',' << data.sigma[k];
    ss << '\n';
  }
  return ss.str();
}

std::string basis_to_csv(const control::RpnBasis& basis) {
  std::ostringstream ss;
  ss << std::setprecision(17) << "t_us";
  for (Eigen::Index n = 0; n < basis.curves.cols(); ++n) ss << ",n" << n;
  ss << '\n';
  for (std::size_t k = 0; k < basis.t_grid.size(); ++k) {
    ss << basis.t_grid[k] * 1e6;
    for (Eigen::Index n = 0; n < basis.curves.cols(); ++n)
      ss << ',' << basis.curves(static_cast<Eigen::Index>(k), n);
    ss << '\n';
  }
  return ss.str();
}

namespace {

json optimizer_to_json(const qng::OptimizerConfig& c) {
  return json{{"restarts", c.restarts}, {"alpha_box", c.alpha_box}, {"r_box", c.r_box},
              {"dim", c.dim},           {"seed", c.seed},           {"tolerance", c.tolerance},
              {"max_iterations", c.max_iterations}};
}

qng::OptimizerConfig optimizer_from_json(const json& j) {
  qng::OptimizerConfig c;
  c.restarts = j.at("restarts");
  c.alpha_box = j.at("alpha_box");
  c.r_box = j.at("r_box");
  c.dim = j.at("dim");
  c.seed = j.at("seed");
  c.tolerance = j.at("tolerance");
  c.max_iterations = j.at("max_iterations");
  return c;
}

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }
cplx complex_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

json curve_to_json(const qng::ThresholdCurve& curve, const std::vector<double>& a_grid) {
  json j;
  j["schema"] = "fockqng.threshold_curve/1";
  j["n"] = curve.n;
  j["optimizer"] = optimizer_to_json(curve.config);
  j["a_grid"] = a_grid;
  json pts = json::array();
  for (const auto& p : curve.points) {
    json c = json::array();
    for (const cplx& z : p.coeffs) c.push_back(complex_json(z));
    pts.push_back({{"a", p.a},
                   {"f_bar", p.f_bar},
                   {"p_n", p.p_n},
                   {"p_tail", p.p_tail},
                   {"alpha", p.alpha},
                   {"r", complex_json(p.r)},
                   {"coeffs", std::move(c)},
                   {"restarts", p.restarts},
                   {"converged", p.converged},
                   {"asymptote", p.asymptote},
                   {"leakage", p.leakage}});
  }
  j["points"] = std::move(pts);
  return j;
}

qng::ThresholdCurve curve_from_json(const json& j) {
  if (j.value("schema", "") != "fockqng.threshold_curve/1")
    throw ParseError("threshold curve", 0, "unsupported schema");
  try {
    qng::ThresholdCurve c;
    c.n = j.at("n");
    c.config = optimizer_from_json(j.at("optimizer"));
    for (const auto& p : j.at("points")) {
      qng::ThresholdPoint t;
      t.a = p.at("a");
      t.f_bar = p.at("f_bar");
      t.p_n = p.at("p_n");
      t.p_tail = p.at("p_tail");
      t.alpha = p.at("alpha");
      t.r = complex_from(p.at("r"));
      for (const auto& z : p.at("coeffs")) t.coeffs.push_back(complex_from(z));
      t.restarts = p.at("restarts");
      t.converged = p.at("converged");
      t.asymptote = p.at("asymptote");
      t.leakage = p.at("leakage");
      c.points.push_back(std::move(t));
    }
    return c;
  } catch (const json::exception& e) {
    throw ParseError("threshold curve", 0, e.what());
  }
}

std::string curve_to_csv(const qng::ThresholdCurve& curve) {
  std::ostringstream ss;
  ss << std::setprecision(17) << "a,f_bar,p_n,p_tail,alpha,abs_r,asymptote\n";
  for (const auto& p : curve.points)
    ss << p.a << ',' << p.f_bar << ',' << p.p_n << ',' << p.p_tail << ',' << p.alpha << ','
       << std::abs(p.r) << ',' << (p.asymptote ? 1 : 0) << '\n';
  return ss.str();
}

// ---------------------------------------------------------------------------
// Config

namespace {

// Display-unit values rounded to 12 significant digits so SI round trips
// print as written.
double shown(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const double scale = std::pow(10.0, 11 - static_cast<int>(std::floor(std::log10(std::abs(x)))));
  return std::round(x * scale) / scale;
}

}  // namespace

control::DeviceNoise Config::device_noise() const {
  return control::DeviceNoise{NoiseParams::from_t1_t2star(qubit_t1_us * 1e-6, qubit_t2star_us * 1e-6),
                              NoiseParams::from_t1_t2star(phonon_t1_us * 1e-6, phonon_t2star_us * 1e-6)};
}

json Config::to_json() const {
  using control::kTwoPi;
  json j;
  j["system"] = {{"omega_q_ghz", shown(system.omega_q / kTwoPi / 1e9)},
                 {"anharm_mhz", shown(system.anharm / kTwoPi / 1e6)},
                 {"omega_a_ghz", shown(system.omega_a / kTwoPi / 1e9)},
                 {"g_khz", shown(system.g / kTwoPi / 1e3)},
                 {"omega_d_ghz", shown(system.omega_d / kTwoPi / 1e9)},
                 {"qubit_levels", system.qubit_levels}};
  j["noise"] = {{"qubit_t1_us", qubit_t1_us},
                {"qubit_t2star_us", qubit_t2star_us},
                {"phonon_t1_us", phonon_t1_us},
                {"phonon_t2star_us", phonon_t2star_us}};
  j["qng"] = optimizer_to_json(qng);
  j["qng"]["a_count"] = a_count;
  j["qng"]["a_max"] = a_max;
  j["grape"] = {{"target_fidelity", grape.target_fidelity},
                {"max_iterations", grape.max_iterations},
                {"ceiling_mhz", shown(grape.amplitude_ceiling / kTwoPi / 1e6)},
                {"restarts", grape.restarts},
                {"seed", grape.seed},
                {"memory", grape.memory},
                {"initial_amplitude", grape.initial_amplitude},
                {"dt_ns", shown(grape.dt * 1e9)}};
  j["rpn"] = {{"t_max_us", shown(rpn.t_max * 1e6)}, {"points", rpn.points}, {"n_max", rpn.n_max}};
  j["metrology"] = {{"readout_time_us", readout_time_us}};
  j["force"] = {{"mass_ug", shown(force.mass * 1e9)},
                {"omega_ghz", shown(force.omega / kTwoPi / 1e9)},
                {"t_probe_us", shown(force.t_probe * 1e6)},
                {"t_dead_us", shown(force.t_dead * 1e6)},
                {"total_time_s", force.total_time},
                {"fq", force.fq}};
  return j;
}

namespace {

/// Reads known keys of one section; anything else is an error.
class Section {
 public:
  Section(const json& root, const char* name, const std::string& source)
      : source_(source), name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ParseError(source, 0, std::string("'") + name + "' must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const json& v = node_->at(key);
    if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer())
        throw ParseError(source_, 0, name_ + "." + key + " must be an integer");
    } else {
      if (!v.is_number()) throw ParseError(source_, 0, name_ + "." + key + " must be a number");
    }
    out = v.get<T>();
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw ParseError(source_, 0, "unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json* node_ = nullptr;
  std::string source_, name_;
  std::set<std::string> seen_;
};

}  // namespace

Config Config::from_json(const json& j, const std::string& source) {
  using control::kTwoPi;
  if (!j.is_object()) throw ParseError(source, 1, "config must be a JSON object");
  static const std::set<std::string> sections{"system", "noise", "qng", "grape", "rpn", "metrology", "force"};
  for (const auto& [k, v] : j.items())
    if (!sections.count(k)) throw ParseError(source, 0, "unknown section '" + k + "'");

  Config c;
  auto scaled = [&](Section& s, const char* key, double& target, double unit) {
    double v = target / unit;
    s.get(key, v);
    target = v * unit;
  };
  {
    Section s(j, "system", source);
    scaled(s, "omega_q_ghz", c.system.omega_q, kTwoPi * 1e9);
    scaled(s, "anharm_mhz", c.system.anharm, kTwoPi * 1e6);
    scaled(s, "omega_a_ghz", c.system.omega_a, kTwoPi * 1e9);
    scaled(s, "g_khz", c.system.g, kTwoPi * 1e3);
    scaled(s, "omega_d_ghz", c.system.omega_d, kTwoPi * 1e9);
    s.get("qubit_levels", c.system.qubit_levels);
    s.finish();
  }
  {
    Section s(j, "noise", source);
    s.get("qubit_t1_us", c.qubit_t1_us);
    s.get("qubit_t2star_us", c.qubit_t2star_us);
    s.get("phonon_t1_us", c.phonon_t1_us);
    s.get("phonon_t2star_us", c.phonon_t2star_us);
    s.finish();
  }
  {
    Section s(j, "qng", source);
    s.get("restarts", c.qng.restarts);
    s.get("alpha_box", c.qng.alpha_box);
    s.get("r_box", c.qng.r_box);
    s.get("dim", c.qng.dim);
    s.get("seed", c.qng.seed);
    s.get("tolerance", c.qng.tolerance);
    s.get("max_iterations", c.qng.max_iterations);
    s.get("a_count", c.a_count);
    s.get("a_max", c.a_max);
    s.finish();
  }
  {
    Section s(j, "grape", source);
    s.get("target_fidelity", c.grape.target_fidelity);
    s.get("max_iterations", c.grape.max_iterations);
    scaled(s, "ceiling_mhz", c.grape.amplitude_ceiling, kTwoPi * 1e6);
    s.get("restarts", c.grape.restarts);
    s.get("seed", c.grape.seed);
    s.get("memory", c.grape.memory);
    s.get("initial_amplitude", c.grape.initial_amplitude);
    scaled(s, "dt_ns", c.grape.dt, 1e-9);
    s.finish();
  }
  {
    Section s(j, "rpn", source);
    scaled(s, "t_max_us", c.rpn.t_max, 1e-6);
    s.get("points", c.rpn.points);
    s.get("n_max", c.rpn.n_max);
    s.finish();
  }
  {
    Section s(j, "metrology", source);
    s.get("readout_time_us", c.readout_time_us);
    s.finish();
  }
  {
    Section s(j, "force", source);
    scaled(s, "mass_ug", c.force.mass, 1e-9);
    scaled(s, "omega_ghz", c.force.omega, kTwoPi * 1e9);
    scaled(s, "t_probe_us", c.force.t_probe, 1e-6);
    scaled(s, "t_dead_us", c.force.t_dead, 1e-6);
    s.get("total_time_s", c.force.total_time);
    s.get("fq", c.force.fq);
    s.finish();
  }

  // Physical validation is a domain error (unphysical input), not a parse error.
  c.system.validate();
  c.device_noise().qubit.validate();
  c.device_noise().phonon.validate();
  c.qng.validate();
  c.grape.validate();
  c.force.validate();
  if (c.a_count < 2 || !(c.a_max > 1e-3)) throw std::domain_error("config: invalid qng a-grid");
  if (!(c.readout_time_us >= 0.0)) throw std::domain_error("config: readout_time_us must be >= 0");
  return c;
}

Config Config::load(const fs::path& path) {
  return from_json(parse_json_text(read_text(path), path.string()), path.string());
}

json RunManifest::to_json() const {
  return json{{"command", command}, {"config", config},         {"inputs", inputs},
              {"outputs", outputs}, {"seed", seed},             {"tool_version", kVersion},
              {"wall_time_s", wall_time_s}};
}

fs::path curve_cache_path(const fs::path& dir, int n, const qng::OptimizerConfig& cfg,
                          const std::vector<double>& a_grid) {
  json key{{"n", n}, {"optimizer", optimizer_to_json(cfg)}, {"a_grid", a_grid}, {"version", kVersion}};
  return dir / ("threshold_n" + std::to_string(n) + "_" + hex64(fnv1a(key.dump())) + ".json");
}

}  // namespace fockqng::io

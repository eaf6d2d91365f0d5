#pragma once

// File formats: Fock distributions (JSON / CSV), pulses, RPN traces,
// threshold curves, run manifests and the device/optimizer config.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fockqng/control.hpp"
#include "fockqng/hilbert.hpp"
#include "fockqng/metrology.hpp"
#include "fockqng/qng.hpp"

namespace fockqng::io {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

/// Malformed input. `line()` is 1-based, or 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct DistributionData {
  FockDistribution dist;
  std::vector<double> sigma;  // empty when the file has none
};

/// JSON {"p": [...], "sigma": [...]} or CSV with header `n,p[,sigma]`,
/// chosen by extension. Missing n are zero. Syntax errors throw ParseError;
/// unphysical probabilities throw std::domain_error.
DistributionData read_distribution(const std::filesystem::path& path);
DistributionData parse_distribution_csv(const std::string& text, const std::string& source);
DistributionData parse_distribution_json(const std::string& text, const std::string& source);

json distribution_to_json(const FockDistribution& dist, const std::vector<double>& sigma);
std::string distribution_to_csv(const FockDistribution& dist, const std::vector<double>& sigma);

json pulse_to_json(const control::Pulse& pulse);
control::Pulse pulse_from_json(const json& j, const std::string& source);

struct RpnData {
  std::vector<double> t_us;
  std::vector<double> p_e;
  std::vector<double> sigma;
};
/// CSV `t_us,p_e,sigma`.
RpnData parse_rpn_csv(const std::string& text, const std::string& source);
std::string rpn_to_csv(const RpnData& data);
std::string basis_to_csv(const control::RpnBasis& basis);

json curve_to_json(const qng::ThresholdCurve& curve, const std::vector<double>& a_grid);
qng::ThresholdCurve curve_from_json(const json& j);
std::string curve_to_csv(const qng::ThresholdCurve& curve);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Write to `<path>.tmp.<pid>` and rename over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

struct Config {
  control::SystemParams system;  // phonon_levels is chosen per command
  double qubit_t1_us = 17.2, qubit_t2star_us = 24.5;
  double phonon_t1_us = 89.0, phonon_t2star_us = 152.0;
  qng::OptimizerConfig qng;
  int a_count = 64;
  double a_max = 20.0;
  control::GrapeConfig grape;
  control::ReadoutConfig rpn;
  metrology::ForceParams force{16.2e-9, control::kTwoPi * 5.023e9, 90e-6, 210e-6, 0.0, 4.0};
  double readout_time_us = 10.0;

  control::DeviceNoise device_noise() const;

  /// Unit-explicit JSON (GHz, MHz, kHz, us, ug); round-trips through `from_json`.
  json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ParseError.
  static Config from_json(const json& j, const std::string& source);
  static Config load(const std::filesystem::path& path);
};

struct RunManifest {
  std::string command;
  json config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;

  json to_json() const;
};

/// Cache file for a threshold curve, keyed by n and a hash of the optimizer
/// settings and a-grid.
std::filesystem::path curve_cache_path(const std::filesystem::path& dir, int n,
                                       const qng::OptimizerConfig& cfg,
                                       const std::vector<double>& a_grid);

}  // namespace fockqng::io

#include <filesystem>

#include "doctest.h"
#include "fockqng/io.hpp"

using namespace fockqng;
using namespace fockqng::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fockqng_io_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("distribution CSV parsing") {
  const auto d = parse_distribution_csv("# comment\nn,p,sigma\n0,0.1,0.01\n2, 0.7 ,0.02\n", "x.csv");
  CHECK(d.dist.size() == 3);
  CHECK(d.dist[1] == 0.0);
  CHECK(d.dist[2] == 0.7);
  CHECK(d.sigma == std::vector<double>{0.01, 0.0, 0.02});
  CHECK(parse_distribution_csv("n,p\n0,1\n", "y").sigma.empty());

  try {
    parse_distribution_csv("n,p\n0,0.5\n1,abc\n", "bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_distribution_csv("k,p\n0,1\n", "h"), ParseError);
  CHECK_THROWS_AS(parse_distribution_csv("n,p\n0,0.5\n0,0.2\n", "dup"), ParseError);
  CHECK_THROWS_AS(parse_distribution_csv("n,p\n0,0.7\n1,0.7\n", "sum"), std::domain_error);
  CHECK_THROWS_AS(parse_distribution_csv("n,p\n-1,0.5\n", "neg"), ParseError);
}

TEST_CASE("distribution JSON round trip") {
  const FockDistribution d({0.05, 0.9, 0.05});
  const std::vector<double> s{0.01, 0.02, 0.01};
  const auto back = parse_distribution_json(distribution_to_json(d, s).dump(), "mem");
  for (int n = 0; n < 3; ++n) CHECK(back.dist[n] == d[n]);
  CHECK(back.sigma == s);
  const auto csv = parse_distribution_csv(distribution_to_csv(d, s), "mem");
  for (int n = 0; n < 3; ++n) CHECK(csv.dist[n] == d[n]);
  CHECK_THROWS_AS(parse_distribution_json("{\"p\": [0.5, \"x\"]}", "j"), ParseError);
  CHECK_THROWS_AS(parse_distribution_json("{\"p\": [0.5], \"schema\": \"other/2\"}", "j"), ParseError);
  CHECK_THROWS_AS(parse_distribution_json("not json", "j"), ParseError);
}

TEST_CASE("read_distribution picks the format by extension") {
  const auto js = scratch("d.json"), cs = scratch("d.csv"), tx = scratch("d.txt");
  atomic_write(js, distribution_to_json(FockDistribution::fock(2), {}).dump());
  atomic_write(cs, "n,p\n3,1\n");
  atomic_write(tx, "n,p\n3,1\n");
  CHECK(read_distribution(js).dist[2] == 1.0);
  CHECK(read_distribution(cs).dist[3] == 1.0);
  CHECK_THROWS_AS(read_distribution(tx), ParseError);
  CHECK_THROWS_AS(read_distribution(scratch("missing.json")), ParseError);
}

TEST_CASE("pulse JSON round trip") {
  control::Pulse p;
  p.dt = 4e-9;
  p.samples = {{1.0, 2.0}, {-3.5, 0.25}};
  const json j = pulse_to_json(p);
  CHECK(j["dt_ns"] == doctest::Approx(4.0));
  CHECK(j["amplitude_units"] == "rad_per_s");
  CHECK(j["frame"] == "rotating_at_omega_a");
  const auto back = pulse_from_json(j, "mem");
  CHECK(back.dt == p.dt);
  CHECK(back.samples == p.samples);
  json bad = j;
  bad["amplitude_units"] = "MHz";
  CHECK_THROWS_AS(pulse_from_json(bad, "mem"), ParseError);
}

TEST_CASE("RPN traces") {
  const auto d = parse_rpn_csv("t_us,p_e,sigma\n0,1,0.01\n0.5,0.8,0.01\n", "r");
  CHECK(d.t_us.size() == 2);
  const auto back = parse_rpn_csv(rpn_to_csv(d), "r");
  CHECK(back.p_e == d.p_e);
  CHECK_THROWS_AS(parse_rpn_csv("t_us,p_e,sigma\n0,1,0.01\n0,0.8,0.01\n", "r"), ParseError);
}

TEST_CASE("threshold curve JSON round trip") {
  qng::ThresholdCurve c;
  c.n = 2;
  c.config.restarts = 3;
  qng::ThresholdPoint p;
  p.a = 0.1;
  p.f_bar = 0.6;
  p.p_n = 0.55;
  p.p_tail = 0.5;
  p.alpha = 0.7;
  p.r = {0.1, 0.2};
  p.coeffs = {{0.6, 0.0}, {0.0, 0.8}};
  c.points = {p};
  const auto back = curve_from_json(curve_to_json(c, {0.1}));
  CHECK(back.n == 2);
  CHECK(back.config.restarts == 3);
  CHECK(back.points[0].f_bar == 0.6);
  CHECK(back.points[0].r == p.r);
  CHECK(back.points[0].coeffs == p.coeffs);
  CHECK(curve_to_csv(c).rfind("a,f_bar", 0) == 0);
}

TEST_CASE("config round trip and validation") {
  Config c;
  c.qng.restarts = 5;
  c.grape.amplitude_ceiling = control::kTwoPi * 12e6;
  c.phonon_t1_us = 80.0;
  const auto back = Config::from_json(c.to_json(), "mem");
  CHECK(back.qng.restarts == 5);
  CHECK(back.grape.amplitude_ceiling == doctest::Approx(c.grape.amplitude_ceiling));
  CHECK(back.phonon_t1_us == 80.0);
  CHECK(back.to_json() == c.to_json());
  CHECK(Config::from_json(json::object(), "mem").system.g == doctest::Approx(control::kTwoPi * 292e3));
  CHECK_THROWS_AS(Config::from_json(json{{"qng", {{"restartz", 3}}}}, "mem"), ParseError);
  CHECK_THROWS_AS(Config::from_json(json{{"extra", 1}}, "mem"), ParseError);
  CHECK_THROWS_AS(Config::from_json(json{{"qng", {{"restarts", 1.5}}}}, "mem"), ParseError);
  CHECK_THROWS_AS(Config::from_json(json{{"noise", {{"qubit_t1_us", -1.0}}}}, "mem"), std::domain_error);
  CHECK(c.device_noise().phonon.kappa == doctest::Approx(1.0 / 80e-6));
}

TEST_CASE("manifest, hashing and cache keys") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
  RunManifest m;
  m.command = "force";
  m.seed = 7;
  const json j = m.to_json();
  CHECK(j["tool_version"] == kVersion);
  CHECK(j["seed"] == 7);
  qng::OptimizerConfig a, b;
  b.seed = 2;
  const auto grid = qng::default_a_grid(8);
  CHECK(curve_cache_path("c", 1, a, grid) != curve_cache_path("c", 1, b, grid));
  CHECK(curve_cache_path("c", 1, a, grid) != curve_cache_path("c", 2, a, grid));
  CHECK(curve_cache_path("c", 1, a, grid) == curve_cache_path("c", 1, a, grid));
}

TEST_CASE("atomic write leaves no temporary file") {
  const auto p = scratch("atomic.txt");
  atomic_write(p, "one");
  atomic_write(p, "two");
  CHECK(read_text(p) == "two");
  for (const auto& e : fs::directory_iterator(p.parent_path()))
    CHECK(e.path().filename().string().find(".tmp.") == std::string::npos);
}

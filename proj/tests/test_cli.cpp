#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fockqng/io.hpp"

namespace fs = std::filesystem;
using fockqng::io::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fockqng_cli_test";

// Small optimizer settings keep the threshold curves cheap.
const char* kConfig = R"({
  "qng": {"restarts": 4, "a_count": 10},
  "grape": {"restarts": 1}
})";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" FOCKQNG_CLI "' " + args + " > '" + (kRoot / "stdout.txt").string() +
                          "' 2> '" + (kRoot / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

struct Fixture {
  fs::path out = kRoot / "out";
  std::string base;
  Fixture() {
    fs::create_directories(out);
    write(kRoot / "config.json", kConfig);
    base = "--config '" + (kRoot / "config.json").string() + "' --out '" + out.string() + "' ";
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "force report") {
  REQUIRE(run(base + "force") == 0);
  const auto j = load(out / "force.json");
  CHECK(j["delta_f0_n_per_sqrt_hz"].get<double>() == doctest::Approx(6.32e-14).epsilon(0.01));
  CHECK(j["manifest"]["command"] == "force");
}

TEST_CASE_FIXTURE(Fixture, "fisher of Fock states") {
  REQUIRE(run(base + "fisher --fock 0 --alpha-count 20") == 0);
  CHECK(load(out / "fisher.json")["fi_max"].get<double>() == doctest::Approx(4.0).epsilon(1e-6));
  REQUIRE(run(base + "fisher --fock 1 --t-us 0 --alpha-count 20") == 0);
  CHECK(load(out / "fisher.json")["fi_max"].get<double>() == doctest::Approx(12.0).epsilon(1e-6));
  REQUIRE(run(base + "fisher --fock 6 --readout --alpha-count 60") == 0);
  const auto j = load(out / "fisher.json");
  CHECK(j["fi_max"].get<double>() < 52.0);
  CHECK(j["damping_time_us"].get<double>() == doctest::Approx(10.0));
  CHECK(j.contains("manifest"));
  CHECK(fs::exists(out / "fisher_curve.csv"));
}

TEST_CASE_FIXTURE(Fixture, "witness and depth") {
  write(kRoot / "fock1.csv", "n,p\n1,1\n");
  write(kRoot / "vac.json", R"({"p": [1.0]})");
  REQUIRE(run(base + "qng witness --input '" + (kRoot / "fock1.csv").string() + "'") == 0);
  CHECK(load(out / "qng_witness.json")["results"][0]["violated"] == true);
  REQUIRE(run(base + "qng depth --n 1 --input '" + (kRoot / "vac.json").string() + "'") == 0);
  const auto d = load(out / "qng_depth.json")["results"][0];
  CHECK(d["violated"] == false);
  CHECK(d["depth_db"].get<double>() == 0.0);
  REQUIRE(run(base + "qng depth --input '" + (kRoot / "fock1.csv").string() + "'") == 0);
  const auto d1 = load(out / "qng_depth.json")["results"][0];
  CHECK(d1["depth_db"].get<double>() > 0.0);
  CHECK(d1["wait_time_us"].get<double>() > 0.0);
}

TEST_CASE_FIXTURE(Fixture, "input errors map to exit codes") {
  write(kRoot / "bad.csv", "n,p\n0,0.5\n1,zz\n");
  CHECK(run(base + "qng witness --input '" + (kRoot / "bad.csv").string() + "'") == 1);
  CHECK(slurp(kRoot / "stderr.txt").find("bad.csv:3") != std::string::npos);
  write(kRoot / "over.csv", "n,p\n0,0.6\n1,0.6\n");
  CHECK(run(base + "qng witness --input '" + (kRoot / "over.csv").string() + "'") == 2);
  CHECK(run(base + "fisher --fock 1 --input x.json") == 1);
  CHECK(run(base + "nosuchcommand") == 1);
  write(kRoot / "badconfig.json", R"({"qng": {"restartz": 2}})");
  CHECK(run("--config '" + (kRoot / "badconfig.json").string() + "' force") == 1);
}

TEST_CASE_FIXTURE(Fixture, "config path from the environment") {
  write(kRoot / "env.json", R"({"force": {"fq": 16}})");
  REQUIRE(run("--out '" + out.string() + "' force", "FOCKQNG_CONFIG='" + (kRoot / "env.json").string() + "'") == 0);
  CHECK(load(out / "force.json")["delta_f0_n_per_sqrt_hz"].get<double>() == doctest::Approx(3.16e-14).epsilon(0.01));
}

TEST_CASE_FIXTURE(Fixture, "same manifest gives the same payload") {
  auto payload = [&]() {
    REQUIRE(run(base + "--seed 3 qng threshold --n 2 --no-cache") == 0);
    auto j = load(out / "threshold_n2.json");
    j["manifest"].erase("wall_time_s");
    return j.dump();
  };
  const auto first = payload();
  CHECK(payload() == first);
  CHECK(slurp(out / "threshold_n2.csv").rfind("a,f_bar", 0) == 0);
}

TEST_CASE_FIXTURE(Fixture, "threshold cache is reused") {
  const fs::path cache = kRoot / "cache";
  fs::remove_all(cache);
  REQUIRE(run(base + "qng threshold --n 1 --cache-dir '" + cache.string() + "'") == 0);
  CHECK(slurp(kRoot / "stderr.txt").find("computing") != std::string::npos);
  REQUIRE(run(base + "qng threshold --n 1 --cache-dir '" + cache.string() + "'") == 0);
  CHECK(slurp(kRoot / "stderr.txt").find("computing") == std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "rpn fit output feeds the other commands") {
  REQUIRE(run(base + "rpn simulate --fock 2 --n-max 4 --noise none") == 0);
  REQUIRE(fs::exists(out / "rpn_basis.csv"));
  const std::string signal = (kRoot / "signal.csv").string();
  fs::copy_file(out / "rpn_signal.csv", signal, fs::copy_options::overwrite_existing);
  REQUIRE(run(base + "rpn fit --n-max 4 --noise none --input '" + signal + "'") == 0);
  const auto fit = load(out / "rpn_fit.json");
  CHECK(fit["p"][2].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  const std::string dist = (kRoot / "fit.json").string();
  fs::copy_file(out / "rpn_fit.json", dist, fs::copy_options::overwrite_existing);
  CHECK(run(base + "qng witness --input '" + dist + "'") == 0);
  CHECK(load(out / "qng_witness.json")["results"][0]["n"] == 2);
  CHECK(run(base + "fisher --alpha-count 20 --input '" + dist + "'") == 0);
  CHECK(load(out / "fisher.json")["fi_max"].get<double>() == doctest::Approx(20.0).epsilon(1e-4));
}

TEST_CASE_FIXTURE(Fixture, "grape pulse and report") {
  REQUIRE(run(base + "grape --n 1 --duration-us 1.2") == 0);
  const auto r = load(out / "grape_n1.json");
  CHECK(r["fidelity"].get<double>() >= 0.999);
  CHECK(std::abs(r["fidelity"].get<double>() - r["fidelity_check"].get<double>()) < 1e-6);
  const auto pulse = fockqng::io::pulse_from_json(load(out / "pulse_n1.json"), "pulse");
  CHECK(pulse.samples.size() == 300);
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rlpp/cli.hpp"
#include "rlpp/harness.hpp"

using namespace rlpp;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = RLPP_SOURCE_DIR;
const std::string kOval = (kRoot / "configs/oval.toml").string();

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome rlpp_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rlpp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rlpp_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_results(const fs::path& p, const std::string& name, double t_mean) {
  harness::LapStats s;
  s.t_mean = s.t_min = s.t_max = t_mean;
  s.laps = 10;
  harness::write_results(p, {{name, s}});
}

}  // namespace

TEST_CASE("argument errors") {
  CHECK(rlpp_cli({}).code == cli::kParseFailure);
  CHECK(rlpp_cli({"fly"}).code == cli::kParseFailure);
  CHECK(rlpp_cli({"eval", "--laps", "many"}).code == cli::kParseFailure);
  CHECK(rlpp_cli({"compare", "--a", "x.csv"}).code == cli::kParseFailure);
  const auto help = rlpp_cli({"--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("track") != std::string::npos);
}

TEST_CASE("track check") {
  const auto ok = rlpp_cli({"track", "check", "--config", kOval});
  CHECK(ok.code == cli::kOk);
  CHECK(ok.out.find("38.8496") != std::string::npos);

  const auto missing = rlpp_cli({"track", "check", "--config", kOval, "--track", "/no/such/track.csv"});
  CHECK(missing.code == cli::kValidationFailure);
  CHECK(missing.err.find("/no/such/track.csv") != std::string::npos);

  const auto dir = scratch("badkey");
  std::ofstream(dir / "bad.toml") << "track = \"" << (kRoot / "data/oval_track.csv").string()
                                  << "\"\n[pp]\nlookahead = 1.0\n";
  const auto bad = rlpp_cli({"track", "check", "--config", (dir / "bad.toml").string()});
  CHECK(bad.code == cli::kParseFailure);
  CHECK(bad.err.find("pp.lookahead") != std::string::npos);

  const auto range = rlpp_cli({"track", "check", "--config", kOval, "--seed", "1"});
  CHECK(range.code == cli::kOk);
  fs::remove_all(dir);
}

TEST_CASE("track profile") {
  const auto dir = scratch("profile");
  const auto r = rlpp_cli({"track", "profile", "--config", kOval, "--out", dir.string()});
  CHECK(r.code == cli::kOk);
  CHECK(fs::exists(dir / "raceline.csv"));
  CHECK(fs::exists(dir / "effective_config.json"));
  CHECK(track::load_raceline(dir / "raceline.csv").points().size() == 392);
  fs::remove_all(dir);
}

TEST_CASE("compare reports improvement and gap closure") {
  const auto dir = scratch("compare");
  write_results(dir / "pp.csv", "pp", 14.3464);
  write_results(dir / "rlpp.csv", "rlpp", 13.6023);
  write_results(dir / "ref.csv", "ref", 12.5587);
  const auto r = rlpp_cli({"compare", "--a", (dir / "pp.csv").string(), "--b",
                           (dir / "rlpp.csv").string()});
  CHECK(r.code == cli::kOk);
  const auto pos = r.out.find("improvement ");
  REQUIRE(pos != std::string::npos);
  const double pct = std::stod(r.out.substr(pos + 12));
  CHECK(std::abs(pct - 5.2) <= 0.1);

  const auto g = rlpp_cli({"compare", "--a", (dir / "pp.csv").string(), "--b",
                           (dir / "rlpp.csv").string(), "--ref", (dir / "ref.csv").string()});
  CHECK(g.code == cli::kOk);
  CHECK(g.out.find("gap closure") != std::string::npos);

  const auto missing = rlpp_cli({"compare", "--a", (dir / "none.csv").string(), "--b",
                                 (dir / "rlpp.csv").string()});
  CHECK(missing.code == cli::kValidationFailure);
  fs::remove_all(dir);
}

TEST_CASE("eval of the baseline controller") {
  const auto dir = scratch("eval");
  const auto a = rlpp_cli({"eval", "--config", kOval, "--controller", "pp", "--laps", "2", "--out",
                           (dir / "a").string()});
  REQUIRE(a.code == cli::kOk);
  CHECK(fs::exists(dir / "a" / "effective_config.json"));
  const auto ra = harness::read_results(dir / "a" / "results.csv");
  REQUIRE(ra.size() == 1);
  CHECK(ra[0].first == "pp");
  CHECK(ra[0].second.laps == 2);

  const auto b = rlpp_cli({"eval", "--config", kOval, "--controller", "pp", "--laps", "2", "--out",
                           (dir / "b").string()});
  REQUIRE(b.code == cli::kOk);
  const auto rb = harness::read_results(dir / "b" / "results.csv");
  CHECK(rb[0].second.t_mean == ra[0].second.t_mean);
  CHECK(rb[0].second.d_std == ra[0].second.d_std);

  CHECK(rlpp_cli({"eval", "--config", kOval, "--controller", "mpc", "--out", dir.string()}).code ==
        cli::kValidationFailure);
  CHECK(rlpp_cli({"eval", "--config", kOval, "--controller", "rlpp", "--out", dir.string()}).code ==
        cli::kValidationFailure);

  const auto par = rlpp_cli({"eval", "--config", kOval, "--laps", "1", "--parallel", "2", "--seed",
                             "5", "--out", (dir / "p").string()});
  CHECK(par.code == cli::kOk);
  CHECK(fs::exists(dir / "p" / "seed_5" / "results.csv"));
  CHECK(fs::exists(dir / "p" / "seed_6" / "results.csv"));
  fs::remove_all(dir);
}

TEST_CASE("flag overrides equal config settings") {
  const auto dir = scratch("override");
  std::string text = slurp(kOval);
  const auto replace = [&](const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), to);
  };
  replace("d_la = 1.8", "d_la = 1.5");
  replace("alpha_v = 0.94", "alpha_v = 0.8");
  replace("alpha_rl = 0.55", "alpha_rl = 0.25");
  replace("seed = 0", "seed = 3");
  replace("\"../data/oval_track.csv\"", "\"" + (kRoot / "data/oval_track.csv").string() + "\"");
  std::ofstream(dir / "edited.toml") << text;

  CHECK(rlpp_cli({"eval", "--config", (dir / "edited.toml").string(), "--laps", "1", "--out",
                  (dir / "file").string()})
            .code == cli::kOk);
  CHECK(rlpp_cli({"eval", "--config", kOval, "--laps", "1", "--d-la", "1.5", "--alpha-v", "0.8",
                  "--alpha-rl", "0.25", "--seed", "3", "--out", (dir / "flags").string()})
            .code == cli::kOk);
  auto file = nlohmann::json::parse(slurp(dir / "file" / "effective_config.json"));
  auto flags = nlohmann::json::parse(slurp(dir / "flags" / "effective_config.json"));
  file.erase("out");
  flags.erase("out");
  file.erase("digest");
  flags.erase("digest");
  CHECK(file == flags);
  fs::remove_all(dir);
}

TEST_CASE("export writes artifacts") {
  const auto dir = scratch("export");
  const auto r = rlpp_cli({"export", "--config", kOval, "--laps", "2", "--out", dir.string()});
  CHECK(r.code == cli::kOk);
  for (const char* f : {"lap_00.csv", "lap_01.csv", "laps.csv", "controller_cpu.csv",
                        "trajectory.svg", "velocity.svg", "effective_config.json", "results.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  fs::remove_all(dir);
}

TEST_CASE("train then evaluate the residual controller") {
  const auto dir = scratch("train");
  std::ofstream(dir / "tiny.toml") << "track = \"" << (kRoot / "data/oval_track.csv").string()
                                   << "\"\n[observation]\nwaypoints = 2\n"
                                      "[env]\nmax_steps = 100\n"
                                      "[sac]\nhidden = [16, 16]\nbatch_size = 16\n";
  const auto cfg = (dir / "tiny.toml").string();
  const auto t = rlpp_cli({"train", "--config", cfg, "--steps", "300", "--out",
                           (dir / "run").string()});
  REQUIRE(t.code == cli::kOk);
  for (const char* f : {"policy.json", "metrics.csv", "effective_config.json"}) {
    CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
  }
  const auto policy = (dir / "run" / "policy.json").string();
  const auto e = rlpp_cli({"eval", "--config", cfg, "--controller", "rlpp", "--checkpoint", policy,
                           "--laps", "1", "--out", (dir / "eval").string()});
  CHECK((e.code == cli::kOk || e.code == cli::kRuntimeFailure));
  CHECK(fs::exists(dir / "eval" / "effective_config.json"));

  const auto mismatch = rlpp_cli({"eval", "--config", kOval, "--controller", "rlpp",
                                  "--checkpoint", policy, "--out", (dir / "m").string()});
  CHECK(mismatch.code == cli::kValidationFailure);
  CHECK(mismatch.err.find("dimension") != std::string::npos);
  fs::remove_all(dir);
}

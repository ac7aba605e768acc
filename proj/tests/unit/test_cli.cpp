#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "harness/cli.hpp"
#include "harness/config.hpp"

using namespace harness;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const std::map<std::string, std::string>& env = {}) {
  std::ostringstream out, err;
  const int code = dispatch(args, env, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("harness_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  fs::path path_;
};

std::string hash_in(const std::string& validate_out) {
  const auto at = validate_out.find("config_hash=");
  return at == std::string::npos ? "" : validate_out.substr(at + 12, 16);
}

const std::vector<std::string> kSmallSweep{"sweep", "--noise", "gaussian(1)", "--kind", "free,clip,freeze,drift",
                                           "--n",   "32",      "--replicas",  "60",     "--seed",
                                           "11",    "--K",     "0.5,1"};

}  // namespace

TEST(Cli, ExactReportsWallMean) {
  const auto r = run({"exact", "--d", "1", "--kernel", "nn", "--noise", "rademacher(1)", "--kind", "clip", "--n", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["mean"], "3/4");
  EXPECT_DOUBLE_EQ(j["mean_approx"].get<double>(), 0.75);
  EXPECT_EQ(j["kind"], "clip");
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
}

TEST(Cli, BoundsNuCurveHitsLogTwo) {
  const auto r = run({"bounds", "--noise", "laplace(1)", "--t-max", "2", "--curve", "nu"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,value,kind,provenance,config_hash");
  bool found = false;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (std::stod(line.substr(0, comma)) == 2.0) {
      found = true;
      EXPECT_NEAR(std::stod(line.substr(comma + 1)), std::log(2.0), 1e-7);
    }
  }
  EXPECT_TRUE(found);
}

TEST(Cli, BoundsOtherCurves) {
  for (const char* curve : {"h", "envelope", "poly", "ell_L"}) {
    const auto r = run({"bounds", "--curve", curve, "--n", "64", "--alpha", "3", "--d", "2", "--kernel", "nn"});
    EXPECT_EQ(r.code, 0) << curve << ": " << r.err;
    EXPECT_GT(std::count(r.out.begin(), r.out.end(), '\n'), 2) << curve;
  }
  const auto bad = run({"bounds", "--curve", "spline"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("bounds.curve"), std::string::npos);
}

TEST(Cli, ValidateRejectsSubStochasticKernel) {
  const auto r = run({"validate", "--kernel", "[[-1, 0.45], [1, 0.45]]"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NotStochastic"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("experiment.kernel"), std::string::npos) << r.err;
  EXPECT_EQ(run({"validate"}).code, 0);
}

TEST(Cli, ConfigErrorsNameTheKey) {
  TempDir dir;
  auto r = run({"validate", "--config", dir.write("a.ini", "[experiment]\ncolour=red\n").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("experiment.colour"), std::string::npos) << r.err;
  r = run({"validate", "--config", dir.write("b.ini", "[plot]\nstyle=1\n").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("plot"), std::string::npos) << r.err;
  r = run({"validate", "--config", dir.write("c.ini", "[experiment]\nn_max=ten\n").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("experiment.n_max"), std::string::npos) << r.err;
  r = run({"validate", "--config", (dir.path() / "missing.ini").string()});
  EXPECT_EQ(r.code, 2);
  r = run({"validate", "--n", "abc"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--n"), std::string::npos) << r.err;
  r = run({"validate", "--noise", "gauss(1)"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("experiment.noise"), std::string::npos) << r.err;
  r = run({"validate", "--geometry", "torus", "--torus-side", "0"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("experiment.torus_side"), std::string::npos) << r.err;
  r = run({"validate", "--tail-scale", "ell_L", "--tail-parameter", "0.5"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("tails.parameter"), std::string::npos) << r.err;
  r = run({"validate", "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"tails"}).code, 2);  // no K grid
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto r = run({"exact", "--noise", "gaussian(1)", "--n", "2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("InvalidParams"), std::string::npos) << r.err;
  EXPECT_EQ(run({"exact", "--noise", "rademacher(1)", "--n", "9"}).code, 1);  // TooLarge
}

TEST(Cli, SeedPrecedence) {
  TempDir dir;
  const auto cfg = dir.write("s.ini", "[experiment]\nseed=5\n").string();
  auto expect_seed = [](std::uint64_t seed) {
    RunConfig c;
    c.seed = seed;
    return config_hash(c);
  };
  EXPECT_EQ(hash_in(run({"validate"}).out), expect_seed(0));
  EXPECT_EQ(hash_in(run({"validate", "--config", cfg}).out), expect_seed(5));
  EXPECT_EQ(hash_in(run({"validate", "--config", cfg}, {{"HARNESS_SEED", "6"}}).out), expect_seed(6));
  EXPECT_EQ(hash_in(run({"validate", "--config", cfg, "--seed", "7"}, {{"HARNESS_SEED", "6"}}).out), expect_seed(7));
  EXPECT_EQ(hash_in(run({"validate", "--seed", "7"}).out), expect_seed(7));
  const auto bad = run({"validate"}, {{"HARNESS_SEED", "-3"}});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("HARNESS_SEED"), std::string::npos) << bad.err;
}

TEST(Cli, ConfigRoundTrips) {
  gen::Rng rng(23);
  const std::vector<std::string> noises{"gaussian(1.5)", "rademacher(1)", "laplace(0.25)", "pareto(3, x_min=2)"};
  for (int trial = 0; trial < 100; ++trial) {
    RunConfig c;
    c.dim = gen::uniform_int(rng, 1, 4);
    c.kernel = gen::uniform_int(rng, 0, 1) ? "nn" : "[[-1,0.25],[1,0.25],[0,0.5]]";
    c.noise = noises[static_cast<std::size_t>(gen::uniform_int(rng, 0, 3))];
    c.kinds.clear();
    for (ProcessKind k : {ProcessKind::free, ProcessKind::clip, ProcessKind::freeze, ProcessKind::drift})
      if (gen::uniform_int(rng, 0, 1)) c.kinds.push_back(k);
    c.geometry = gen::uniform_int(rng, 0, 1) ? "cone" : "torus";
    c.torus_side = gen::uniform_int(rng, 0, 64);
    c.n_max = gen::uniform_int(rng, 1, 5000);
    for (int i = gen::uniform_int(rng, 0, 3); i > 0; --i) c.times.push_back(gen::uniform_int(rng, 1, 99) * (5 - i));
    c.replicas = gen::uniform_int(rng, 2, 1 << 30);
    c.seed = rng();
    c.start_height = std::ldexp(static_cast<double>(gen::uniform_int(rng, 0, 1000)), -gen::uniform_int(rng, 0, 20));
    for (int i = gen::uniform_int(rng, 0, 3); i > 0; --i)
      c.tail_K.push_back(std::uniform_real_distribution<double>(0.01, 10.0)(rng));
    c.tail_scale = gen::uniform_int(rng, 0, 1) ? "auto" : "log_power";
    c.tail_parameter = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    c.fit_transform = gen::uniform_int(rng, 0, 1) ? "loglog" : "ell_L";
    c.fit_parameter = 0.1 * gen::uniform_int(rng, 0, 30);
    c.fit_n_min = gen::uniform_int(rng, 1, 256);
    c.curve = gen::uniform_int(rng, 0, 1) ? "h" : "nu";
    c.t_max = std::uniform_real_distribution<double>(0.0, 1e4)(rng);
    c.alpha = std::uniform_real_distribution<double>(1.0, 6.0)(rng);
    c.gamma = std::uniform_real_distribution<double>(1.0, 6.0)(rng);
    c.output_dir = gen::uniform_int(rng, 0, 1) ? "" : "out/run_" + std::to_string(trial);
    c.format = gen::uniform_int(rng, 0, 1) ? "csv" : "json";
    c.workers = gen::uniform_int(rng, 1, 16);
    const auto text = to_ini(c);
    const auto back = parse_config(text);
    EXPECT_EQ(back, c) << text;
    EXPECT_EQ(to_ini(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
  }
}

TEST(Cli, SweepIsByteIdenticalAcrossRerunsAndWorkers) {
  const auto a = run(kSmallSweep);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(run(kSmallSweep).out, a.out);
  auto args = kSmallSweep;
  args.insert(args.end(), {"--workers", "3"});
  EXPECT_EQ(run(args).out, a.out);

  TempDir d1, d2;
  auto with_dir = [&](const TempDir& d, const char* workers) {
    auto v = kSmallSweep;
    v.insert(v.end(), {"--out", d.path().string(), "--workers", workers});
    return run(v);
  };
  ASSERT_EQ(with_dir(d1, "1").code, 0);
  ASSERT_EQ(with_dir(d2, "4").code, 0);
  for (const char* f : {"series.csv", "summary.json"}) {
    EXPECT_FALSE(slurp(d1.path() / f).empty()) << f;
    EXPECT_EQ(slurp(d1.path() / f), slurp(d2.path() / f)) << f;
  }
  EXPECT_EQ(slurp(d1.path() / "series.csv"), a.out);
}

TEST(Cli, EveryOutputCarriesTheHash) {
  TempDir dir;
  const auto cfg = dir.write("run.ini",
                             "[experiment]\nnoise=rademacher(1)\nkinds=clip\nn_max=16\nreplicas=40\nseed=3\n"
                             "[tails]\nK=0.5,2\n[fit]\nn_min=1\n");
  const std::string hash = hash_in(run({"validate", "--config", cfg.string()}).out);
  ASSERT_EQ(hash.size(), 16u);

  const auto sweep = run({"sweep", "--config", cfg.string(), "--out", (dir.path() / "sweep").string()});
  ASSERT_EQ(sweep.code, 0) << sweep.err;
  std::istringstream rows(slurp(dir.path() / "sweep" / "series.csv"));
  std::string line;
  std::getline(rows, line);
  int count = 0;
  while (std::getline(rows, line)) {
    EXPECT_EQ(line.substr(0, 17), hash + ",");
    ++count;
  }
  EXPECT_EQ(count, 5 * 2);
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "sweep" / "summary.json"));
  EXPECT_EQ(summary["config_hash"], hash);
  EXPECT_EQ(summary["hard_assertions_pass"], true);
  EXPECT_TRUE(summary["fits"]["clip"].contains("slope"));

  const auto tails = run({"tails", "--config", cfg.string()});
  ASSERT_EQ(tails.code, 0) << tails.err;
  EXPECT_NE(tails.out.find("\n" + hash + ",clip,16,"), std::string::npos);

  const auto fit = run({"fit", "--config", cfg.string()});
  ASSERT_EQ(fit.code, 0) << fit.err;
  const auto fj = nlohmann::json::parse(fit.out);
  EXPECT_EQ(fj["config_hash"], hash);
  // refitting the written series gives the same slope
  const auto refit = run({"fit", "--config", cfg.string(), "--input", (dir.path() / "sweep" / "series.csv").string()});
  ASSERT_EQ(refit.code, 0) << refit.err;
  EXPECT_EQ(nlohmann::json::parse(refit.out)["fits"]["clip"]["slope"], fj["fits"]["clip"]["slope"]);

  const auto exact = run({"exact", "--config", cfg.string(), "--n", "2"});
  ASSERT_EQ(exact.code, 0) << exact.err;
  EXPECT_EQ(nlohmann::json::parse(exact.out)["config_hash"].get<std::string>().size(), 16u);

  const auto bounds = run({"bounds", "--config", cfg.string()});
  ASSERT_EQ(bounds.code, 0) << bounds.err;
  std::istringstream b(bounds.out);
  std::getline(b, line);
  while (std::getline(b, line)) EXPECT_EQ(line.substr(line.size() - 16), hash);
}

TEST(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hbar/io.hpp"

namespace fs = std::filesystem;
using hbar::io::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / ("hbar_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string& args) {
    std::string cmd = "cd '" + dir.string() + "' && '" HBAR_CLI_PATH "' " + args + " 2>&1";
    Outcome r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    int st = ::pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
  }

  static std::string cfg(const std::string& name) { return std::string("'" HBAR_CONFIG_DIR "/") + name + "'"; }

  std::string slurp(const fs::path& rel) {
    std::ifstream in(dir / rel, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  json read_json(const fs::path& rel) { return json::parse(slurp(rel)); }

  // Writes a config into the scratch directory with extra run keys merged in.
  std::string scratch_config(const std::string& base, const json& run_extra) {
    std::ifstream in(std::string(HBAR_CONFIG_DIR) + "/" + base);
    json j = json::parse(in);
    for (auto& [k, v] : run_extra.items()) j["run"][k] = v;
    std::ofstream(dir / base) << j.dump(2);
    return "'" + (dir / base).string() + "'";
  }
};

std::set<std::string> csv_labels(const std::string& csv) {
  std::set<std::string> labels;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
    if (f.size() >= 4) labels.insert(f[3]);
  }
  return labels;
}

std::vector<double> heights(const json& j) { return j["heights"].get<std::vector<double>>(); }

void expect_heights(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
}

}  // namespace

TEST_F(Cli, CurveWeakHasSevenPieces) {
  Outcome r = run("curve " + cfg("weak.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::string csv = slurp("out/weak/curve.csv");
  EXPECT_EQ(csv_labels(csv),
            (std::set<std::string>{"Dec1", "FlatMB", "Inc2", "FlatM", "Dec3", "FlatBeta", "Inc4"}));
  EXPECT_NE(csv.find("\r\n"), std::string::npos);
  json bp = read_json("out/weak/breakpoints.json");
  EXPECT_EQ(bp["regime"], "WeakI");
  EXPECT_EQ(bp["breakpoints"].size(), 6u);
  json man = read_json("out/weak/manifest_curve.json");
  EXPECT_EQ(man["command"], "curve");
  EXPECT_EQ(man["hash"].get<std::string>().size(), 16u);
  EXPECT_TRUE(man.contains("timestamp"));
}

TEST_F(Cli, CurveStrongEasyLabels) {
  ASSERT_EQ(run("curve " + cfg("strong_easy.json")).code, 0);
  EXPECT_EQ(csv_labels(slurp("out/strong_easy/curve.csv")), (std::set<std::string>{"Dec1", "FlatBeta", "Inc4"}));
}

TEST_F(Cli, CurveIsByteIdenticalOnRerun) {
  ASSERT_EQ(run("curve " + cfg("iid.json") + " --seed 11").code, 0);
  std::string a = slurp("out/iid/curve.csv"), ab = slurp("out/iid/breakpoints.json");
  ASSERT_EQ(run("curve " + cfg("iid.json") + " --seed 11").code, 0);
  EXPECT_EQ(a, slurp("out/iid/curve.csv"));
  EXPECT_EQ(ab, slurp("out/iid/breakpoints.json"));
  // A different seed changes the manifest hash column.
  ASSERT_EQ(run("curve " + cfg("iid.json") + " --seed 12").code, 0);
  EXPECT_NE(a, slurp("out/iid/curve.csv"));
}

TEST_F(Cli, OutOverrideAndJobsAreRespected) {
  ASSERT_EQ(run("curve " + cfg("weak.json") + " --out elsewhere --jobs 2").code, 0);
  EXPECT_TRUE(fs::exists(dir / "elsewhere" / "curve.csv"));
  EXPECT_EQ(read_json("elsewhere/manifest_curve.json")["effective"]["run"]["jobs"], 2);
}

TEST_F(Cli, FlatsIidAndTriangle) {
  ASSERT_EQ(run("flats " + cfg("iid.json")).code, 0);
  expect_heights(heights(read_json("out/iid/flats.json")), {1.0, 1.1, 1.4});
  ASSERT_EQ(run("flats " + cfg("strong_tri.json")).code, 0);
  expect_heights(heights(read_json("out/strong_tri/flats.json")), {1.0, 1.4});
}

TEST_F(Cli, FlatsBothModeCarriesEventEvidence) {
  ASSERT_EQ(run("flats " + cfg("w_shape.json") + " --mode both --samples 400").code, 0);
  json j = read_json("out/w_shape/flats.json");
  expect_heights(heights(j), {1.0, 1.1, 1.4});
  bool saw_event = false;
  for (const auto& e : j["entries"])
    for (const auto& ev : e["evidence"]) saw_event |= ev["kind"] == "InteriorEvent";
  EXPECT_TRUE(saw_event);
}

TEST_F(Cli, TamperedClosedFormExitsFour) {
  Outcome r = run("flats " + cfg("tampered.json"));
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("InconsistentEvidence"), std::string::npos);
}

TEST_F(Cli, MalformedJsonExitsTwoWithPosition) {
  Outcome r = run("curve " + cfg("malformed.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("malformed.json:3:"), std::string::npos) << r.out;
  EXPECT_EQ(run("curve " + cfg("weak.json") + " --bogus").code, 2);
  EXPECT_EQ(run("flats " + cfg("weak.json") + " --mode sometimes").code, 2);
  EXPECT_EQ(run("curve missing.json").code, 2);
}

TEST_F(Cli, ValidatePassesAndNegativeControlFails) {
  std::string c = scratch_config("weak.json", {{"dx", 2e-3}, {"T", 20.0}, {"probes", {-2.5, -1.0, 0.0, 0.5}}});
  Outcome ok = run("validate " + c);
  EXPECT_EQ(ok.code, 0) << ok.out;
  std::string csv = slurp("out/weak/validation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  Outcome bad = run("validate " + c + " --curve-beta 0.3");
  EXPECT_EQ(bad.code, 4) << bad.out;
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, EpsSweepHasThreeDecreasingRows) {
  std::string c = scratch_config("weak.json", {{"dx", 2e-3}});
  Outcome r = run("validate " + c + " --eps-sweep 20,40,80");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(slurp("out/weak/eps_sweep.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> err;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    err.push_back(std::stod(f[2]));
  }
  ASSERT_EQ(err.size(), 3u);
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}

TEST_F(Cli, CorrectorLadderCertifiesLevel) {
  ASSERT_EQ(run("corrector " + cfg("strong_tri.json") + " --recipe LadderLower --lambda 1.1").code, 0);
  json v = read_json("out/strong_tri/viscosity.json");
  EXPECT_NEAR(v["sub"].get<double>(), 1.1, 1e-9);
  EXPECT_NEAR(v["super"].get<double>(), 1.1, 1e-9);
  std::string csv = slurp("out/strong_tri/corrector.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 802);
}

TEST_F(Cli, CorrectorSubOnlyRecipe) {
  ASSERT_EQ(run("corrector " + cfg("weak.json") + " --recipe Flat_beta_sub --epsilon 0.05").code, 0);
  json v = read_json("out/weak/viscosity.json");
  EXPECT_NEAR(v["sub"].get<double>(), 0.2, 1e-9);
  EXPECT_TRUE(v["super"].is_null());
}

TEST_F(Cli, CorrectorErrors) {
  EXPECT_EQ(run("corrector " + cfg("strong_tri.json") + " --recipe LadderLower --lambda 2.5").code, 3);
  EXPECT_EQ(run("corrector " + cfg("strong_tri.json") + " --recipe NoSuchRecipe --lambda 1.1").code, 2);
}

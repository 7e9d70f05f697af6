#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "hardylab/scenario.hpp"

using namespace hardylab;
namespace fs = std::filesystem;

namespace {

struct Cli {
  int code;
  std::string out;
};

// runs the binary with stdout+stderr merged; output lands under `root`
Cli cli(const std::string& args, const fs::path& root) {
  const std::string cmd =
      "HARDYLAB_OUTPUT_ROOT='" + root.string() + "' '" + std::string(HARDYLAB_CLI_PATH) + "' " + args + " 2>&1";
  FILE* f = popen(cmd.c_str(), "r");
  if (!f) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), f)) out.append(buf.data(), n);
  const int st = pclose(f);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string scenario(const std::string& name) { return std::string(HARDYLAB_SCENARIO_DIR) + "/" + name + ".cfg"; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class ScenarioTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / ("hardylab_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  fs::path write_cfg(const std::string& text) {
    const fs::path p = root / "in.cfg";
    std::ofstream(p) << text;
    return p;
  }

  fs::path root;
};

const char* kSolveCfg = R"(name = tiny
pipeline = solve
mesh.kind = interval
mesh.x_min = -1
mesh.x_max = 1
mesh.cells = 64
operator.p = 3
solve.load = 1
)";

}  // namespace

TEST_F(ScenarioTest, ValidateShippedScenarios) {
  for (const char* s : {"classical_p2_n3", "annulus_p2_n3", "radial_p15_n3", "solve_p3_interval", "supercritical_green",
                        "tensor_aniso_p15"}) {
    auto r = cli("validate " + scenario(s), root);
    EXPECT_EQ(r.code, 0) << s << "\n" << r.out;
    EXPECT_NE(r.out.find("ok: " + std::string(s)), std::string::npos) << r.out;
  }
}

TEST_F(ScenarioTest, PAtOneIsConfigError) {
  auto r = cli("validate " + write_cfg("name = x\npipeline = solve\nmesh.kind = interval\noperator.p = 1\n").string(),
               root);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("p must exceed 1"), std::string::npos) << r.out;
}

TEST_F(ScenarioTest, UnknownKeySuggestion) {
  auto r = cli("validate " + write_cfg(std::string(kSolveCfg) + "ppp = 2\n").string(), root);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("operator.p"), std::string::npos) << r.out;
}

TEST_F(ScenarioTest, AllErrorsReported) {
  try {
    parse_config_text("name = x\npipeline = solve\nmesh.kind = interval\nmesh.cells = 3\noperator.p = 0.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("p must exceed 1"), std::string::npos) << m;
    EXPECT_NE(m.find("mesh.cells"), std::string::npos) << m;
  }
}

TEST_F(ScenarioTest, HashIgnoresCommentsAndOrder) {
  const auto a = parse_config_text(kSolveCfg);
  std::string shuffled = "# comment\n";
  std::istringstream is(kSolveCfg);
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.insert(lines.begin(), l + "   # trailing");
  for (const auto& l : lines) shuffled += l + "\n";
  const auto b = parse_config_text(shuffled);
  EXPECT_EQ(a.hash(), b.hash());
  const auto c = parse_config_text(std::string(kSolveCfg) + "solve.tol = 1e-9\n");
  EXPECT_NE(a.hash(), c.hash());
}

TEST_F(ScenarioTest, BadCommandLine) {
  EXPECT_EQ(cli("", root).code, 3);
  EXPECT_EQ(cli("frobnicate", root).code, 3);
  EXPECT_EQ(cli("run /nonexistent/file.cfg", root).code, 3);
}

TEST_F(ScenarioTest, SolveProfile) {
  auto r = cli("run -q " + scenario("solve_p3_interval"), root);
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path dir = root / "out" / "solve_p3_interval";
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));
  // -(|u'|u')' = 1, u(+-1) = 0: u(x) = (2/3)(1 - |x|^{3/2}), so u(0) = 2/3
  std::ifstream is(dir / "solution.csv");
  std::string line;
  std::getline(is, line);
  double best = 1e9, u0 = 0;
  while (std::getline(is, line)) {
    int node;
    double x, u;
    char tag[64];
    if (std::sscanf(line.c_str(), "%d,%lf,%63[^,],%lf", &node, &x, tag, &u) != 4) continue;
    if (std::abs(x) < best) best = std::abs(x), u0 = u;
  }
  EXPECT_NEAR(u0, 2.0 / 3.0, 1e-3);
}

TEST_F(ScenarioTest, ClassicalVerifyAll) {
  auto r = cli("run " + scenario("classical_p2_n3"), root);
  EXPECT_EQ(r.code, 0) << r.out;
  const fs::path dir = root / "out" / "classical_p2_n3";
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["exit_code"], 0);
  ASSERT_GE(m["reports"].size(), 6u);
  for (const auto& rep : m["reports"]) EXPECT_TRUE(rep["pass"].get<bool>()) << rep.dump();
  for (const auto& a : m["artifacts"]) EXPECT_TRUE(fs::exists(dir / a.get<std::string>())) << a;
  EXPECT_FALSE(fs::exists(dir / "manifest.json.tmp"));

  auto rep = cli("report " + (dir / "manifest.json").string(), root);
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("classical_p2_n3"), std::string::npos) << rep.out;
  EXPECT_NE(rep.out.find("weight.csv"), std::string::npos) << rep.out;
}

TEST_F(ScenarioTest, SupercriticalDiagnostic) {
  auto r = cli("run -q " + scenario("supercritical_green"), root);
  EXPECT_EQ(r.code, 2) << r.out;
  const fs::path dir = root / "out" / "supercritical_green";
  ASSERT_TRUE(fs::exists(dir / "diagnostic.json"));
  auto d = nlohmann::json::parse(slurp(dir / "diagnostic.json"));
  EXPECT_EQ(d["type"], "criticality_suspected");
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "partial");
  EXPECT_EQ(m["exit_code"], 2);
}

TEST_F(ScenarioTest, ByteIdenticalCsv) {
  const fs::path a = root / "a", b = root / "b";
  ASSERT_EQ(cli("run -q " + scenario("classical_p2_n3"), a).code, 0);
  ASSERT_EQ(cli("run -q " + scenario("classical_p2_n3"), b).code, 0);
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a / "out" / "classical_p2_n3")) {
    if (e.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / "out" / "classical_p2_n3" / e.path().filename())) << e.path();
    ++compared;
  }
  EXPECT_GE(compared, 4);
}

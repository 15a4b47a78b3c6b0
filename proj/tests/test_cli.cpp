#include "qvigeom/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;
using namespace qvigeom;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "qvigeom");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("qvigeom_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    toy_ = (dir_ / "toy3x2.json").string();
    write_file(toy_, toy3x2_document());
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::size_t data_rows(const std::string& csv) const {
    std::istringstream in(read_file(csv));
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line[0] != '#' && line[0] != 'k') ++n;
    return n;
  }

  fs::path dir_;
  std::string toy_;
};

}  // namespace

TEST_F(CliTest, ValidateToy) {
  const Result r = run({"validate", toy_});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("valid: toy3x2"), std::string::npos);
}

TEST_F(CliTest, ValidateCheckedInData) {
  EXPECT_EQ(run({"validate", std::string(QVIGEOM_DATA_DIR) + "/toy3x2.json"}).code, 0);
}

TEST_F(CliTest, ValidateTruncated) {
  const std::string doc = toy3x2_document();
  write_file(path("cut.json"), doc.substr(0, doc.size() / 2));
  const Result r = run({"validate", path("cut.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("parse error"), std::string::npos);
}

TEST_F(CliTest, ValidateBadRowSum) {
  Json j = parse_json(toy3x2_document(), "toy");
  j["transitions"][1][2] = Json::array({0.3, 0.3, 0.3});
  write_file(path("bad.json"), j.dump());
  const Result r = run({"validate", path("bad.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("a=2, s=3"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateMissingFile) {
  const Result r = run({"validate", path("nope.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("file not found"), std::string::npos);
}

TEST_F(CliTest, ExampleWritesPrintedDigits) {
  EXPECT_EQ(run({"example", "toy3x2", path("ex.json")}).code, 0);
  const Json j = parse_json(read_file(path("ex.json")), "ex");
  EXPECT_EQ(j["gamma"], 0.95);
  EXPECT_EQ(j["transitions"][0][0], Json::array({0.7, 0.2, 0.1}));
  const Result r = run({"example", "toy3x2"});
  EXPECT_EQ(r.out, toy3x2_document());
}

TEST_F(CliTest, ExampleUnknown) {
  const Result r = run({"example", "gridworld"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown example"), std::string::npos);
}

TEST_F(CliTest, AnalyzeToy) {
  const Result r = run({"analyze", toy_, "--report", path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = parse_json(read_file(path("report.json")), "report");
  EXPECT_EQ(j["schema"], kReportSchema);
  EXPECT_NEAR(j["optimality"]["delta_bar"].get<double>(), 0.4022, 1e-3);
  EXPECT_NEAR(j["tube"]["delta"].get<double>(), 0.1609, 1e-3);
  EXPECT_NEAR(j["lambda2"].get<double>(), 0.5618, 1e-3);
  EXPECT_NEAR(j["gamma_lambda2"].get<double>(), 0.5337, 1e-3);
  EXPECT_EQ(j["certificates"]["optimal"]["strict"], "proven-strict");
  EXPECT_EQ(j["certificates"]["full"]["strict"], "proven-strict");
}

TEST_F(CliTest, AnalyzeSwapNotStrict) {
  const Json swap = {{"name", "swap"},
                     {"gamma", 0.9},
                     {"num_states", 2},
                     {"num_actions", 2},
                     {"transitions", {{{0.5, 0.5}, {0.5, 0.5}}, {{0.0, 1.0}, {1.0, 0.0}}}},
                     {"rewards", {{1.0, 0.0}, {0.0, 0.5}}}};
  write_file(path("swap.json"), swap.dump());
  const Result r = run({"analyze", path("swap.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = parse_json(r.out, "stdout");
  EXPECT_EQ(j["certificates"]["full"]["strict"], "proven-not-strict");
  EXPECT_NE(j["obstruction"], "none");
}

TEST_F(CliTest, AnalyzeCapExceededStillSucceeds) {
  const Result r = run({"analyze", toy_, "--depth", "6", "--cap", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const Json j = parse_json(r.out, "stdout");
  EXPECT_EQ(j["certificates"]["full"]["depth_used"], 2);
  EXPECT_FALSE(j["warnings"].empty());
}

TEST_F(CliTest, AnalyzeNumericFailure) {
  Json j = parse_json(toy3x2_document(), "toy");
  j["gamma"] = 0.99999999;
  write_file(path("slow.json"), j.dump());
  const Result r = run({"analyze", path("slow.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("max_iter exceeded"), std::string::npos) << r.err;
}

TEST_F(CliTest, AnalyzeRejectsBadFlags) {
  EXPECT_EQ(run({"analyze", toy_, "--delta-frac", "0.7"}).code, 1);
  EXPECT_EQ(run({"analyze", toy_, "--depth", "0"}).code, 1);
  EXPECT_EQ(run({"analyze", toy_, "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST_F(CliTest, TrajectoryDocumentedQ0) {
  const Result r = run({"trajectory", toy_, "--paper-q0", "--iters", "50", "--csv", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data_rows(path("out/qvi_00.csv")), 51u);
  const Json m = parse_json(read_file(path("out/qvi_manifest.json")), "manifest");
  EXPECT_EQ(m["schema"], kManifestSchema);
  ASSERT_EQ(m["trajectories"].size(), 1u);
  EXPECT_TRUE(m["trajectories"][0]["poss_entrance"].is_number());
  EXPECT_EQ(m["trajectories"][0]["k_basic"], 37);
  EXPECT_NEAR(m["strip_half_width_qp"].get<double>(), 2.0 * m["delta"].get<double>(), 1e-12);
}

TEST_F(CliTest, TrajectoryCircle) {
  ASSERT_EQ(run({"trajectory", toy_, "--circle", "2:12", "--csv", path("c")}).code, 0);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_TRUE(fs::exists(path("c/" + detail::indexed_name("qvi", j)))) << j;
  EXPECT_FALSE(fs::exists(path("c/qvi_12.csv")));
}

TEST_F(CliTest, TrajectoryZeroIters) {
  ASSERT_EQ(run({"trajectory", toy_, "--iters", "0", "--csv", path("z")}).code, 0);
  EXPECT_EQ(data_rows(path("z/qvi_00.csv")), 1u);
}

TEST_F(CliTest, TrajectoryQ0File) {
  write_file(path("q0.json"), Json{{"q", q_table_json(toy3x2_paper_q0(), 3, 2)}}.dump());
  ASSERT_EQ(run({"trajectory", toy_, "--q0", path("q0.json"), "--iters", "5", "--csv", path("f")}).code, 0);
  ASSERT_EQ(run({"trajectory", toy_, "--paper-q0", "--iters", "5", "--csv", path("g")}).code, 0);
  EXPECT_EQ(read_file(path("f/qvi_00.csv")), read_file(path("g/qvi_00.csv")));
}

TEST_F(CliTest, TrajectoryErrors) {
  EXPECT_EQ(run({"trajectory", toy_, "--paper-q0", "--circle", "2:3"}).code, 1);
  EXPECT_EQ(run({"trajectory", toy_, "--circle", "2"}).code, 1);
  EXPECT_EQ(run({"trajectory", toy_, "--circle", "-1:4", "--csv", path("e")}).code, 1);
  Json j = parse_json(toy3x2_document(), "toy");
  j["rewards"][0][0] = 1.01;
  write_file(path("other.json"), j.dump());
  const Result r = run({"trajectory", path("other.json"), "--paper-q0", "--csv", path("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("toy3x2"), std::string::npos);
}

TEST_F(CliTest, QlearnSameSeedSameBytes) {
  const std::vector<std::string> base = {"qlearn", toy_, "--seed", "7", "--steps", "2000", "--circle", "2:3"};
  auto a = base, b = base;
  a.insert(a.end(), {"--csv", path("a")});
  b.insert(b.end(), {"--csv", path("b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    const std::string name = detail::indexed_name("qlearn", j);
    EXPECT_EQ(read_file(path("a/" + name)), read_file(path("b/" + name)));
  }
  EXPECT_EQ(read_file(path("a/qlearn_manifest.json")), read_file(path("b/qlearn_manifest.json")));
  auto c = base;
  c[3] = "8";
  c.insert(c.end(), {"--csv", path("c")});
  ASSERT_EQ(run(c).code, 0);
  EXPECT_NE(read_file(path("a/qlearn_00.csv")), read_file(path("c/qlearn_00.csv")));
}

TEST_F(CliTest, QlearnZeroSteps) {
  ASSERT_EQ(run({"qlearn", toy_, "--steps", "0", "--circle", "2:4", "--csv", path("q")}).code, 0);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(data_rows(path("q/" + detail::indexed_name("qlearn", j))), 1u);
  const Json m = parse_json(read_file(path("q/qlearn_manifest.json")), "manifest");
  EXPECT_EQ(m["config"]["alpha0"], 0.35);
  EXPECT_EQ(m["config"]["decay"], 0.01);
}

TEST_F(CliTest, QlearnBadAlpha) {
  EXPECT_EQ(run({"qlearn", toy_, "--alpha0", "2", "--steps", "10", "--csv", path("q")}).code, 1);
}

TEST_F(CliTest, BinaryExitCodes) {
  auto status = [](const std::string& cmd) {
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  const std::string bin = QVIGEOM_CLI_PATH;
  EXPECT_EQ(status(bin + " validate " + toy_ + " > /dev/null"), 0);
  EXPECT_EQ(status(bin + " validate " + path("missing.json") + " 2> /dev/null"), 1);
  EXPECT_EQ(status(bin + " example nosuch 2> /dev/null"), 1);
  EXPECT_EQ(status(bin + " --version > /dev/null"), 0);
  EXPECT_EQ(status(bin + " --help > /dev/null"), 0);
}

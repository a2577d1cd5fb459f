#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"

using namespace nmrdeco;
namespace fs = std::filesystem;

namespace {

const std::string kData = NMRDECO_DATA_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("nmrdeco_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  fs::path dir_;
};

std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Argument helpers

TEST(CliParsing, GridUnits) {
  const auto g = cli::parse_grid("0:360:5deg", cli::Quantity::angle);
  EXPECT_NEAR(g.grid.stop, 2 * std::numbers::pi, 1e-15);
  EXPECT_EQ(g.grid.points().size(), 73u);
  EXPECT_EQ(g.unit, "deg");
  const auto t = cli::parse_grid("0ms:20ms:0.5ms", cli::Quantity::time);
  EXPECT_EQ(t.grid.points().size(), 41u);
  EXPECT_NEAR(t.grid.step, 0.5e-3, 1e-18);
  const auto mixed = cli::parse_grid("0:0.02s:500us", cli::Quantity::time);
  EXPECT_NEAR(mixed.grid.start, 0.0, 0.0);
  EXPECT_NEAR(mixed.grid.stop, 0.02, 1e-15);
  EXPECT_NEAR(mixed.grid.step, 5e-4, 1e-18);
  EXPECT_EQ(cli::parse_grid("0:1:0.5", cli::Quantity::angle).unit, "rad");
}

TEST(CliParsing, GridErrors) {
  EXPECT_THROW(cli::parse_grid("0:360", cli::Quantity::angle), InputError);
  EXPECT_THROW(cli::parse_grid("0:360:5:1", cli::Quantity::angle), InputError);
  EXPECT_THROW(cli::parse_grid("0:360:5kg", cli::Quantity::angle), InputError);
  EXPECT_THROW(cli::parse_grid("0:20:1ms", cli::Quantity::angle), InputError);
  EXPECT_THROW(cli::parse_grid("0:20:1deg", cli::Quantity::time), InputError);
  EXPECT_THROW(cli::parse_grid("10:0:1", cli::Quantity::any), InputError);
  EXPECT_THROW(cli::parse_grid("0:10:0", cli::Quantity::any), InputError);
  EXPECT_THROW(cli::parse_grid("a:10:1", cli::Quantity::any), InputError);
}

TEST(CliParsing, Bindings) {
  const auto b = cli::parse_bindings({"theta=90deg", "t=3.5ms", "n_env=4"});
  EXPECT_NEAR(b.at("theta"), std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(b.at("t"), 3.5e-3, 1e-18);
  EXPECT_EQ(b.at("n_env"), 4.0);
  EXPECT_THROW(cli::parse_bindings({"theta"}), InputError);
  EXPECT_THROW(cli::parse_bindings({"=1"}), InputError);
  EXPECT_THROW(cli::parse_bindings({"a=1", "a=2"}), InputError);
  EXPECT_THROW(cli::parse_bindings({"a=1furlong"}), InputError);
}

TEST(CliParsing, SystemResolution) {
  EXPECT_EQ(cli::resolve_system("tce"), systems::tce());
  EXPECT_EQ(cli::resolve_system(kData + "/systems/chloroform.sys"), systems::chloroform());
  EXPECT_THROW(cli::resolve_system("/no/such.sys"), InputError);
}

// ---------------------------------------------------------------------------
// sweep and fit

TEST_F(CliTest, OneQubitSweepCsv) {
  const auto r = run_cli({"sweep", "--scenario", "one-qubit", "--system", kData + "/systems/chloroform.sys", "--grid",
                          "0:360:5deg", "--out", path("oq.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(read("oq.csv"));
  ASSERT_EQ(rows.size(), 73u);
  for (const auto& row : rows) {
    ASSERT_EQ(row.size(), 3u);
    EXPECT_NEAR(row[1], -std::sin(row[0]), 1e-10);
  }
}

TEST_F(CliTest, DqSweepThenFit) {
  ASSERT_EQ(run_cli({"sweep", "--scenario", "dq", "--system", kData + "/systems/tce.sys", "--grid", "0ms:20ms:0.5ms",
                     "--out", path("dq.csv")})
                .code,
            0);
  const auto r = run_cli({"fit", path("dq.csv"), "--out", path("fit.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read("fit.json"));
  EXPECT_NEAR(j.at("period").get<double>(), 9.50e-3, 0.005 * 9.50e-3);
  EXPECT_NEAR(j.at("amplitude").get<double>(), 1.0, 1e-6);
}

TEST_F(CliTest, JsonSweepRecordsMetadata) {
  const auto r = run_cli({"sweep", "--scenario", "n-env", "--grid", "0:180:30deg", "--bind", "n_env=2", "--format",
                          "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("scenario"), "n-env");
  EXPECT_EQ(j.at("samples").size(), 7u);
  EXPECT_EQ(j.at("metadata").at("bindings").at("n_env"), 2.0);
  EXPECT_EQ(j.at("metadata").at("unit"), "deg");
}

TEST_F(CliTest, SeededNoisyRunsAreByteIdentical) {
  const std::vector<std::string> base{"sweep", "--scenario", "dq",     "--grid", "0:20:0.5ms",
                                      "--noise", "0.02",      "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.csv")});
  b.insert(b.end(), {"--out", path("b.csv"), "--threads", "3"});
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  EXPECT_EQ(read("a.csv"), read("b.csv"));
  auto c = base;
  c[8] = "8";
  EXPECT_NE(run_cli(c).out, read("a.csv"));
}

TEST_F(CliTest, FitAcceptsJsonInputAndCsvOutput) {
  ASSERT_EQ(run_cli({"sweep", "--scenario", "one-qubit", "--grid", "0:360:10deg", "--format", "json", "--out",
                     path("s.json")})
                .code,
            0);
  const auto r = run_cli({"fit", "--in", path("s.json"), "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0][1], 2 * std::numbers::pi, 0.005 * 2 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// simulate

TEST_F(CliTest, SimulateBellPreparation) {
  const auto r = run_cli({"simulate", "--system", "tce", "--sequence", kData + "/sequences/bellprep.seq", "--format",
                          "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("spins"), (std::vector<std::string>{"C1", "C2"}));
  const auto dev = j.at("deviation_re").get<std::vector<std::vector<double>>>();
  // -(IxIx - IzIz - IyIy)
  const std::vector<std::vector<double>> expected{
      {0.25, 0, 0, -0.5}, {0, -0.25, 0, 0}, {0, 0, -0.25, 0}, {-0.5, 0, 0, 0.25}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(dev[i][k], expected[i][k], 1e-10);
}

TEST_F(CliTest, SimulateReadoutAtThreePointFiveMs) {
  const auto r = run_cli({"simulate", "--system", "tce", "--sequence", kData + "/sequences/dq_readout.seq", "--bind",
                          "t=3.5ms", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto re = j.at("deviation_re").get<std::vector<std::vector<double>>>();
  const auto im = j.at("deviation_im").get<std::vector<std::vector<double>>>();
  const double c = std::cos(std::numbers::pi * (9.23 + 201.3) * 3.5e-3);
  EXPECT_NEAR(-4 * re[0][3], c, 1e-9);
  EXPECT_NEAR(-4 * re[1][2], c, 1e-9);
  EXPECT_NEAR(-4 * im[0][2], -c, 1e-9);
  EXPECT_NEAR(-4 * im[0][1], 1.0, 1e-9);
  EXPECT_NEAR(c, -0.677311, 1e-6);
}

TEST_F(CliTest, SimulateTextAndCsv) {
  const auto text = run_cli({"simulate", "--system", "chloroform", "--sequence", kData + "/sequences/entangle.seq",
                             "--bind", "theta=50.3deg"});
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("spins: C H"), std::string::npos);
  EXPECT_NE(text.out.find("peaks C split by H"), std::string::npos);
  const auto csv = run_cli({"simulate", "--system", "chloroform", "--sequence", kData + "/sequences/entangle.seq",
                            "--bind", "theta=50.3deg", "--format", "csv", "--trace", "H"});
  ASSERT_EQ(csv.code, 0) << csv.err;
  const auto rows = csv_rows(csv.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NEAR(std::abs(2 * rows[1][2]), std::sin(50.3 * std::numbers::pi / 180), 1e-9);
}

// ---------------------------------------------------------------------------
// Errors and exit codes

TEST_F(CliTest, MissingFileNamesPath) {
  const auto r = run_cli({"simulate", "--system", path("missing.sys"), "--sequence", kData + "/sequences/product.seq",
                          "--bind", "theta=1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(path("missing.sys")), std::string::npos) << r.err;
  const auto f = run_cli({"fit", path("nothing.csv")});
  EXPECT_EQ(f.code, 1);
  EXPECT_NE(f.err.find(path("nothing.csv")), std::string::npos) << f.err;
}

TEST_F(CliTest, SyntaxErrorReportsPosition) {
  const std::string bad = std::string(NMRDECO_DATA_DIR) + "/../tests/data/bad_axis.seq";
  const auto r = run_cli({"simulate", "--system", "chloroform", "--sequence", bad});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad_axis.seq"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 2, column"), std::string::npos) << r.err;
}

TEST_F(CliTest, InputErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"sweep", "--scenario", "nope", "--grid", "0:1:0.1"}).code, 1);
  EXPECT_EQ(run_cli({"sweep", "--scenario", "dq", "--grid", "0:10:1deg"}).code, 1);
  EXPECT_EQ(run_cli({"sweep", "--scenario", "dq", "--grid", "0:10:1ms", "--format", "xml"}).code, 1);
  EXPECT_EQ(run_cli({"sweep", "--scenario", "dq", "--grid", "0:10:1ms", "--noise", "-1"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--system", "tce", "--sequence", kData + "/sequences/dq_readout.seq"}).code, 1);
  write("flat.csv", "param,value_re,value_im\n0,1,0\n1,1,0\n2,1,0\n3,1,0\n4,1,0\n5,1,0\n6,1,0\n");
  EXPECT_EQ(run_cli({"fit", path("flat.csv")}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("oracle-check"), std::string::npos);
}

TEST_F(CliTest, OracleCheckPassesAndWritesReport) {
  const auto r = run_cli({"oracle-check", "--out", path("report.json")});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  const auto j = nlohmann::json::parse(read("report.json"));
  ASSERT_EQ(j.size(), 3u);
  for (const auto& s : j) EXPECT_TRUE(s.at("pass").get<bool>());
}

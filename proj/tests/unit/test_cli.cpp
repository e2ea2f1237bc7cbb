#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "bnn/hwsim.hpp"
#include "bnn/memfmt.hpp"
#include "cli.hpp"

using namespace bnn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run bnn_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bnn");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(bnn_cli({"--help"}).code == cli::kOk);
  const Run sub_help = bnn_cli({"simulate", "--help"});
  CHECK(sub_help.code == cli::kOk);
  CHECK(sub_help.out.find("--parallelism") != std::string::npos);
  CHECK(bnn_cli({}).code == cli::kUsage);
  const Run bad = bnn_cli({"simulate", "--bogus"});
  CHECK(bad.code == cli::kUsage);
  CHECK(bad.err.rfind("bnn: error[usage]:", 0) == 0);
  CHECK(bnn_cli({"simulate", "--memory", "sram"}).code == cli::kValidation);
  CHECK(bnn_cli({"simulate", "-p", "3"}).code == cli::kValidation);
}

TEST_CASE("simulate echoes the resolved config and honors precedence") {
  TempDir tmp("bnn_cli_config");
  mem::write_text(tmp.path / "sim.ini", "parallelism = 4\nmemory = lut\n");
  const Run from_file = bnn_cli({"simulate", "--config", (tmp.path / "sim.ini").string(), "--format", "csv"});
  REQUIRE(from_file.code == cli::kOk);
  CHECK(from_file.err.find("parallelism=4") != std::string::npos);
  CHECK(from_file.out.find("TOTAL,27445\n") != std::string::npos);

  const Run flag_wins = bnn_cli({"simulate", "--config", (tmp.path / "sim.ini").string(), "-p", "8", "--format", "csv"});
  CHECK(flag_wins.out.find("TOTAL,13763\n") != std::string::npos);

  const Run defaults = bnn_cli({"simulate", "--format", "csv"});
  CHECK(defaults.out.find("TOTAL,109604\n") != std::string::npos);

  mem::write_text(tmp.path / "bad.ini", "parallelism = 4\nwarp_speed = 9\n");
  CHECK(bnn_cli({"simulate", "--config", (tmp.path / "bad.ini").string()}).code == cli::kUsage);
}

TEST_CASE("calibrate and sweep") {
  const Run cal = bnn_cli({"calibrate"});
  REQUIRE(cal.code == cli::kOk);
  CHECK(cal.out.find("g_group 2\n") != std::string::npos);
  CHECK(cal.out.find("c_fixed 15\n") != std::string::npos);
  CHECK(bnn_cli({"calibrate", "--tolerance", "0.001"}).code == cli::kCalibration);

  const Run sweep = bnn_cli({"sweep", "--format", "csv"});
  REQUIRE(sweep.code == cli::kOk);
  CHECK(sweep.out.find("128,LUT,997,9975,") != std::string::npos);
}

TEST_CASE("infer validates before writing output") {
  TempDir tmp("bnn_cli_infer");
  const auto model_dir = tmp.path / "model";
  mem::save_folded_model(hw::blank_model(hw::paper_shapes()), model_dir);
  mem::write_text(tmp.path / "ok.mem", std::string(784, '1') + "\n");
  mem::write_text(tmp.path / "short.mem", std::string(783, '1') + "\n");

  const Run ok = bnn_cli({"infer", "--model", model_dir.string(), "--image", (tmp.path / "ok.mem").string(), "--out",
                      (tmp.path / "ok.txt").string()});
  CHECK(ok.code == cli::kOk);
  CHECK(fs::exists(tmp.path / "ok.txt"));
  CHECK(ok.out.find("predicted 0") != std::string::npos);

  const Run bad = bnn_cli({"infer", "--model", model_dir.string(), "--image", (tmp.path / "short.mem").string(),
                       "--out", (tmp.path / "bad.txt").string()});
  CHECK(bad.code == cli::kValidation);
  CHECK(bad.err.find("error[validation]") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.path / "bad.txt"));

  const Run missing = bnn_cli({"infer", "--model", (tmp.path / "nope").string(), "--image",
                           (tmp.path / "ok.mem").string()});
  CHECK(missing.code == cli::kIo);
}

TEST_CASE("import-mem re-encodes canonically") {
  TempDir tmp("bnn_cli_import");
  mem::write_text(tmp.path / "t.mem", "00000100101\n11111111111\n");
  const Run r = bnn_cli({"import-mem", "--kind", "thresholds", "--in", (tmp.path / "t.mem").string(), "--out",
                     (tmp.path / "u.mem").string()});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("0 37\n1 -1\n") != std::string::npos);
  CHECK(mem::read_text(tmp.path / "u.mem") == mem::read_text(tmp.path / "t.mem"));
  mem::write_text(tmp.path / "bad.mem", "0000010010\n");
  CHECK(bnn_cli({"import-mem", "--kind", "thresholds", "--in", (tmp.path / "bad.mem").string()}).code ==
        cli::kValidation);
}

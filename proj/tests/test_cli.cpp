#include <doctest.h>

#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dagrnn/config.hpp"
#include "dagrnn/errors.hpp"

using namespace dagrnn;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(DAGRNN_CLI_PATH) + " " + args + " 2>&1";
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) {
    r.output.append(buf.data(), n);
  }
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dagrnn_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("run config") {
  SUBCASE("unknown keys are rejected by name") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(cfg.apply("learning_rate", "0.1"),
                         doctest::Contains("learning_rate"), ConfigError);
  }

  SUBCASE("echo round trip") {
    RunConfig cfg;
    cfg.preset = "tiny";
    cfg.neighborhood = 4;
    cfg.epochs = 7;
    cfg.seed = 99;
    cfg.eta = "0.25";
    const RunConfig back = RunConfig::from_echo(cfg.echo());
    CHECK(back.preset == cfg.preset);
    CHECK(back.neighborhood == cfg.neighborhood);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.seed == cfg.seed);
    CHECK(back.eta == cfg.eta);
  }

  SUBCASE("config file parsing") {
    TempDir tmp;
    const std::string path = tmp.sub("run.cfg");
    std::ofstream(path) << "preset tiny\nepochs = 9\n# comment\nseed 4\n";
    const auto entries = parse_config_file(path);
    CHECK(entries.at("preset") == "tiny");
    CHECK(entries.at("epochs") == "9");
    CHECK(entries.at("seed") == "4");
    RunConfig cfg;
    for (const auto& [k, v] : entries) cfg.apply(k, v);
    CHECK(cfg.epochs == 9);
  }

  SUBCASE("validation") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.apply("neighborhood", "5"), ConfigError);
    CHECK_THROWS_AS(cfg.apply("epochs", "three"), ConfigError);
    CHECK_THROWS_AS(cfg.apply("schedule", "never"), ConfigError);
  }
}

TEST_CASE("help output enumerates fields with defaults") {
  const CmdResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("train") != std::string::npos);

  const CmdResult train_help = run_cli("train --help");
  CHECK(train_help.exit_code == 0);
  for (const char* field :
       {"--preset", "--neighborhood", "--hidden-dim", "--class-count", "--eta",
        "--k", "--epochs", "--seed", "--schedule", "--momentum", "--lr",
        "--data", "--checkpoint"}) {
    CAPTURE(field);
    CHECK(train_help.output.find(field) != std::string::npos);
  }
  // Spot-check defaults are displayed.
  CHECK(train_help.output.find("per-epoch-after-10") != std::string::npos);
  CHECK(train_help.output.find("0.001") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("train").exit_code == 2);  // missing --data
  CHECK(run_cli("no-such-command").exit_code == 2);
}

TEST_CASE("end-to-end pipeline on a small beacon dataset") {
  TempDir tmp;
  const std::string data = tmp.sub("data");
  const CmdResult gen =
      run_cli("gen-data --out " + data + " --count 8 --size 16 --seed 5 --train 6");
  REQUIRE(gen.exit_code == 0);
  CHECK(fs::exists(data + "/images/beacon_0000.ppm"));
  CHECK(fs::exists(data + "/split.txt"));

  const std::string ckpt = tmp.sub("model.ckpt");
  const std::string log1 = tmp.sub("run1.log");
  const std::string train_args = "train --data " + data + " --preset tiny" +
                                 " --epochs 2 --seed 7 --checkpoint " + ckpt;
  const CmdResult t1 = run_cli(train_args + " --log " + log1);
  REQUIRE_MESSAGE(t1.exit_code == 0, t1.output);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(log1));

  SUBCASE("training logs are byte-identical across reruns with one seed") {
    const std::string log2 = tmp.sub("run2.log");
    const CmdResult t2 = run_cli(train_args + " --log " + log2);
    REQUIRE(t2.exit_code == 0);
    CHECK(slurp(log1) == slurp(log2));
    CHECK(!slurp(log1).empty());
  }

  SUBCASE("predict and eval close the loop") {
    const std::string preds = tmp.sub("preds");
    const CmdResult p = run_cli("predict --checkpoint " + ckpt + " --out " + preds +
                                " --palette " + data + "/palette.txt " + data +
                                "/images/beacon_0006.ppm");
    REQUIRE_MESSAGE(p.exit_code == 0, p.output);
    CHECK(fs::exists(preds + "/beacon_0006.pgm"));
    CHECK(fs::exists(preds + "/beacon_0006_color.ppm"));

    // Self-evaluation of the ground truth: perfect scores.
    const CmdResult self = run_cli("eval --pred " + data + "/labels --truth " +
                                   data + "/labels");
    REQUIRE_MESSAGE(self.exit_code == 0, self.output);
    CHECK(self.output.find("global 100.0 class 100.0") != std::string::npos);

    // Prediction directory covers only one id: pairing failure.
    const CmdResult unpaired =
        run_cli("eval --pred " + preds + " --truth " + data + "/labels");
    CHECK(unpaired.exit_code == 5);
  }

  SUBCASE("corrupted checkpoint magic exits 4") {
    const std::string bad = tmp.sub("bad.ckpt");
    std::ofstream(bad, std::ios::binary) << "WRONGMAGIC\nversion 1\n";
    const CmdResult p = run_cli("predict --checkpoint " + bad + " --out " +
                                tmp.sub("x") + " " + data +
                                "/images/beacon_0000.ppm");
    CHECK(p.exit_code == 4);
  }

  SUBCASE("checkpoint/config mismatch exits 4") {
    // Rewrite the echo so the checkpoint claims a different hidden size.
    const std::string doctored = tmp.sub("doctored.ckpt");
    std::ifstream in(ckpt, std::ios::binary);
    std::ofstream out(doctored, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line == "config hidden_dim 0") line = "config hidden_dim 8";
      out << line << '\n';
      if (line == "end_config") break;
    }
    out << in.rdbuf();
    const CmdResult p = run_cli("predict --checkpoint " + doctored + " --out " +
                                tmp.sub("y") + " " + data +
                                "/images/beacon_0000.ppm");
    CHECK(p.exit_code == 4);
    CHECK(p.output.find("shape") != std::string::npos);
  }

  SUBCASE("missing dataset exits 3") {
    const CmdResult t = run_cli("train --data " + tmp.sub("missing") +
                                " --epochs 1 --checkpoint " + tmp.sub("m.ckpt"));
    CHECK(t.exit_code == 3);
  }
}

TEST_CASE("inspect-weights surfaces the rare-class structure") {
  TempDir tmp;
  const std::string data = tmp.sub("data");
  REQUIRE(run_cli("gen-data --out " + data + " --count 6 --size 16 --seed 2 --train 6")
              .exit_code == 0);

  const CmdResult r = run_cli("inspect-weights --data " + data);
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("beacon") != std::string::npos);
  // The beacon row must carry a weight strictly above the body rows' 1.
  std::istringstream lines(r.output);
  std::string line;
  double beacon_weight = 0.0, body_weight = -1.0;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string id, name, freq, weight;
    if (!(ls >> id >> name >> freq >> weight)) continue;
    if (name == "beacon") beacon_weight = std::stod(weight);
    if (name == "body-a") body_weight = std::stod(weight);
  }
  CHECK(body_weight == 1.0);
  CHECK(beacon_weight > body_weight);

  SUBCASE("eta override 1.0 marks everything rare") {
    const CmdResult all_rare = run_cli("inspect-weights --data " + data + " --eta 1.0");
    REQUIRE(all_rare.exit_code == 0);
    CHECK(all_rare.output.find("frequent") == std::string::npos);
    std::istringstream lines2(all_rare.output);
    std::string row;
    while (std::getline(lines2, row)) {
      std::istringstream ls(row);
      std::string id, name, freq, weight;
      if (!(ls >> id >> name >> freq >> weight)) continue;
      if (id == "id" || id == "eta") continue;
      CHECK(std::stod(weight) >= 2.0);
    }
  }
}

TEST_CASE("config file values yield to explicit flags") {
  TempDir tmp;
  const std::string data = tmp.sub("data");
  REQUIRE(run_cli("gen-data --out " + data + " --count 4 --size 16 --seed 9 --train 4")
              .exit_code == 0);
  const std::string cfg_path = tmp.sub("run.cfg");
  std::ofstream(cfg_path) << "epochs 1\nseed 3\neta 1.0\n";

  // File sets eta 1.0; the flag overrides back to auto.
  const CmdResult r = run_cli("inspect-weights --data " + data + " --config " +
                              cfg_path + " --eta auto");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("frequent") != std::string::npos);

  // Unknown config key names the offender and exits 2.
  std::ofstream(cfg_path) << "bogus_key 1\n";
  const CmdResult bad = run_cli("inspect-weights --data " + data + " --config " + cfg_path);
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("bogus_key") != std::string::npos);
}

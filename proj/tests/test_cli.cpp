#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(DELFI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "delfi_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth, featurize, train, predict and evaluate") {
  const auto w = workdir().string();
  REQUIRE(run("synth --stations 3 --hours 400 --seed 4 --out " + w + "/data") == 0);
  REQUIRE(fs::exists(workdir() / "data/stations.csv"));
  REQUIRE(run("featurize --data " + w + "/data/stations.csv --out " + w) == 0);
  REQUIRE(fs::exists(workdir() / "features.bin"));
  const std::string small = " --layers 1 --hidden 4 --epochs 1 --component-iters 2 --aggregator-iters 2 --pretrain-epochs 1";
  REQUIRE(run("train --features " + w + "/features.bin --variant short --out " + w + "/models" + small) == 0);
  REQUIRE(run("train --features " + w + "/features.bin --variant long --horizon 6 --out " + w + "/models" + small) == 0);
  CHECK(fs::exists(workdir() / "models/model_short.bin"));
  CHECK(fs::exists(workdir() / "models/model_long_s6.bin"));
  CHECK(slurp(workdir() / "models/train_log_long_s6.csv").rfind("phase,epoch,iter,loss", 0) == 0);

  REQUIRE(run("predict --features " + w + "/features.bin --model " + w + "/models/model_short.bin --horizon 3 --out " +
              w + "/pred") == 0);
  CHECK(slurp(workdir() / "pred/predictions.csv").rfind("station_id,t,horizon,mode,prediction\n", 0) == 0);

  REQUIRE(run("evaluate --features " + w + "/features.bin --models " + w + "/models --eval-stride 5 --out " + w +
              "/eval") == 0);
  const auto report = slurp(workdir() / "eval/report.csv");
  CHECK(report.rfind("method,horizon,mode,metric,value,n_examples,k,seed\n", 0) == 0);
  CHECK(report.find("delfi,6,probabilistic,kl,NA") == std::string::npos);
  CHECK(report.find("delfi,12,probabilistic,kl,NA") != std::string::npos);
  CHECK(fs::exists(workdir() / "eval/report.txt"));
  CHECK(fs::exists(workdir() / "eval/config_evaluate.txt"));
}

TEST_CASE("usage errors exit with status 2") {
  const auto w = workdir().string();
  CHECK(run("") == 2);
  CHECK(run("synth --bogus 1 --out " + w) == 2);
  CHECK(run("featurize --data " + w + "/no_such_file.csv --out " + w) == 2);
  CHECK(run("train --features " + w + "/no_such.bin --variant short") == 2);
  REQUIRE(run("synth --stations 3 --hours 300 --out " + w + "/d2") == 0);
  REQUIRE(run("featurize --data " + w + "/d2/stations.csv --out " + w + "/d2") == 0);
  CHECK(run("train --features " + w + "/d2/features.bin --variant long --out " + w + "/d2") == 2);
  CHECK(run("train --features " + w + "/d2/features.bin --variant medium --out " + w + "/d2") == 2);
}

TEST_CASE("config file values apply and flags override them") {
  const auto w = workdir() / "cfg";
  fs::create_directories(w);
  std::ofstream(w / "synth.cfg") << "# synthetic run\nstations = 5\nhours = 250\nseed = 3\n";
  REQUIRE(run("synth --config " + (w / "synth.cfg").string() + " --hours 220 --out " + w.string()) == 0);
  const auto cfg = slurp(w / "config_synth.txt");
  CHECK(cfg.find("stations = 5") != std::string::npos);
  CHECK(cfg.find("hours = 220") != std::string::npos);
  CHECK(cfg.find("seed = 3") != std::string::npos);
  CHECK(fs::exists(w / "S05.csv"));
}

TEST_CASE("gradcheck passes") { CHECK(run("gradcheck --out " + (workdir() / "gc").string()) == 0); }

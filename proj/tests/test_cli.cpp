#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advnet/model.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "advnet_test_cli";

struct Result {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Result run(const std::string& args) {
  fs::create_directories(kDir);
  const fs::path out = kDir / "stdout.txt", err = kDir / "stderr.txt";
  const std::string cmd = "cd '" + kDir.string() + "' && '" ADVNET_CLI "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

const char* kConfig =
    "depth = 10\nwiden = 1\nadaptive = true\nclasses = 4\ninput_channels = 1\ninput_size = 8\n"
    "objective = natural\nepochs = 2\nbatch_size = 16\nlr = 0.05\ndecay_milestones = 1\n"
    "train_data = synth:blobs,n=64,noise=0.05,contrast=0.15,size=8\n"
    "val_data = synth:blobs,n=32,noise=0.05,contrast=0.15,size=8,seed=1\n"
    "report = report.csv\nreport_timing = false\nseed = 3\n";

}  // namespace

TEST_CASE("params prints exact parameter counts") {
  const Result r = run("params --arch wrn-28-4 --classes 10");
  CHECK(r.code == 0);
  const double n = std::stod(r.out);
  CHECK(n == double(advnet::param_count(advnet::WrnSpec::from_arch("wrn-28-4", 10))));
  CHECK(std::abs(n - 5.85e6) <= 0.005 * 5.85e6);
  CHECK(run("params --arch wrn-28-4-adaptive --classes 10").code == 0);
  CHECK(run("params --arch wrn-27-4 --classes 10").code == 1);
  CHECK(run("params --arch resnet-50").code == 1);
}

TEST_CASE("usage errors exit 1 with usage text on stderr") {
  Result r = run("train");
  CHECK(r.code == 1);
  CHECK(r.err.find("--config") != std::string::npos);
  CHECK(r.out.empty());
  r = run("frobnicate");
  CHECK(r.code == 1);
  CHECK(r.err.find("train") != std::string::npos);
  CHECK(run("").code == 1);
  CHECK(run("params --arch wrn-28-4 --bogus 3").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("train, eval, attack, surface and export work end to end") {
  write(kDir / "toy.cfg", kConfig);
  Result r = run("train --config toy.cfg --out toy.ancp");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(kDir / "toy.ancp"));
  const std::string report = slurp(kDir / "report.csv");
  CHECK(report.rfind("epoch,loss,train_acc,nat_val_acc,rob_val_acc,grad_passes,seconds\n", 0) == 0);
  CHECK(run("train --config toy.cfg --out toy.ancp").code == 0);
  CHECK(slurp(kDir / "report.csv") == report);

  const std::string data = "--data synth:blobs,n=24,noise=0.05,contrast=0.15,size=8,seed=2";
  r = run("eval --model toy.ancp " + data + " --attack pgd:k=1,eps=0,step=0");
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string header, natural, attacked;
  std::getline(lines, header);
  std::getline(lines, natural);
  std::getline(lines, attacked);
  CHECK(header == "attack,accuracy,n,seed");
  // accuracy is the third field from the right; the attack name may hold commas
  const auto acc = [](const std::string& row) {
    const auto before_seed = row.rfind(','), before_n = row.rfind(',', before_seed - 1);
    const auto before_acc = row.rfind(',', before_n - 1);
    return row.substr(before_acc + 1, before_n - before_acc - 1);
  };
  CHECK(acc(natural) == acc(attacked));
  CHECK(run("eval --model toy.ancp " + data + " --attack pgd:k=1,eps=0,step=0").out == r.out);

  r = run("attack --model toy.ancp " + data + " --attack fgsm:eps=8 --images adv.idx --labels adv_labels.idx");
  CHECK(r.code == 0);
  CHECK(fs::file_size(kDir / "adv.idx") == 16 + 24 * 64);

  r = run("surface --model toy.ancp --index 3 --extent 4 --res 5 " + data);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("# extent=4\n# resolution=5\n# seed=0\n", 0) == 0);
  CHECK(run("surface --model toy.ancp --index 3 --extent 4 --res 4").code == 1);
  CHECK(run("surface --model toy.ancp --index 999 --extent 4 --res 5").code == 1);

  r = run("export --model toy.ancp --eps 30 --k 5 --n 3 --dir dump " + data);
  CHECK(r.code == 0);
  CHECK(fs::exists(kDir / "dump" / "adv_0002.pgm"));
  CHECK(fs::exists(kDir / "dump" / "predictions.csv"));
}

TEST_CASE("configuration problems exit 1, runtime failures exit 2") {
  write(kDir / "bad.cfg", std::string(kConfig) + "colour = blue\n");
  CHECK(run("train --config bad.cfg").code == 1);
  write(kDir / "garbled.cfg", "this is not a config\n");
  CHECK(run("train --config garbled.cfg").code == 1);
  CHECK(run("eval --model missing.ancp --attack fgsm:eps=8").code == 2);
  CHECK(run("eval --model toy.ancp --attack cw:eps=8").code == 1);
  write(kDir / "junk.ancp", "definitely not a checkpoint");
  const Result r = run("eval --model junk.ancp --attack fgsm:eps=8");
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
}

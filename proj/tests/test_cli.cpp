#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "audeform/frontend.hpp"

using namespace audeform;

namespace {

const std::string kCli = AUDEFORM_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string out_file = "cli_out.txt";
  const std::string cmd = kCli + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  std::remove(out_file.c_str());
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Micro run config shared by the slow-path commands.
void write_micro_config(const std::string& path) {
  std::ofstream os(path);
  os << "model.input_h = 8\n"
        "model.input_t = 16\n"
        "model.patch = 2\n"
        "model.patch_stride = 2\n"
        "model.num_stages = 2\n"
        "model.stages.0.channels = 8\n"
        "model.stages.0.heads = 2\n"
        "model.stages.1.channels = 8\n"
        "model.stages.1.heads = 2\n"
        "model.stages.1.kind = deformable\n"
        "model.stages.1.merge = true\n"
        "model.stages.1.groups = 1\n"
        "model.stages.1.r = 2\n"
        "data.mels = 8\n"
        "data.frames = 16\n"
        "data.frame_length = 512\n"
        "data.duration = 0.2\n"
        "data.n_per_class = 2\n"
        "train.epochs = 1\n";
}

}  // namespace

TEST_CASE("extract: silence becomes a constant log-floor spectrogram") {
  {
    std::ofstream os("silence.f32", std::ios::binary);
    std::vector<float> zeros(43000, 0.0f);
    os.write(reinterpret_cast<const char*>(zeros.data()),
             static_cast<std::streamsize>(zeros.size() * 4));
  }
  const RunResult r = run("extract --in silence.f32 --out silence.spec --rate 43000 --mels 16");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("16 x") != std::string::npos);
  const Spectrogram s = read_spec("silence.spec");
  CHECK(s.h == 16);
  const float floor_val = static_cast<float>(std::log(1e-10));
  for (double v : s.values) CHECK(static_cast<float>(v) == floor_val);
  std::remove("silence.f32");
  std::remove("silence.spec");
}

TEST_CASE("gradcheck subcommand exits zero on fresh seeds") {
  const RunResult r = run("gradcheck --size 8 --seed 3");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("adaptor") != std::string::npos);
  CHECK(r.output.find("full_model") != std::string::npos);

  const RunResult bad = run("gradcheck --size 6");
  CHECK(bad.exit_code == 2);
}

TEST_CASE("train twice with one seed produces identical bytes") {
  write_micro_config("micro.cfg");
  const RunResult a = run("train --config micro.cfg --seed 5 --out cli_run_a");
  const RunResult b = run("train --config micro.cfg --seed 5 --out cli_run_b");
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(slurp("cli_run_a/metrics.csv") == slurp("cli_run_b/metrics.csv"));
  CHECK(slurp("cli_run_a/model.dckp") == slurp("cli_run_b/model.dckp"));
  std::filesystem::remove_all("cli_run_b");
}

TEST_CASE("eval loads the checkpoint it was trained from") {
  // Depends on the train test above having produced cli_run_a.
  write_micro_config("micro.cfg");
  if (!std::filesystem::exists("cli_run_a/model.dckp"))
    REQUIRE(run("train --config micro.cfg --seed 5 --out cli_run_a").exit_code == 0);
  const RunResult r = run("eval --config micro.cfg --ckpt cli_run_a/model.dckp --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("top1=") != std::string::npos);
}

TEST_CASE("viz subcommands write their artifacts") {
  write_micro_config("micro.cfg");
  if (!std::filesystem::exists("cli_run_a/model.dckp"))
    REQUIRE(run("train --config micro.cfg --seed 5 --out cli_run_a").exit_code == 0);
  {
    std::ofstream os("viz_in.f32", std::ios::binary);
    std::vector<float> tone(9000);
    for (std::size_t i = 0; i < tone.size(); ++i)
      tone[i] = 0.4f * std::sin(2.0f * 3.14159265f * 1500.0f * i / 43000.0f);
    os.write(reinterpret_cast<const char*>(tone.data()),
             static_cast<std::streamsize>(tone.size() * 4));
  }
  REQUIRE(run("extract --in viz_in.f32 --out viz.spec --rate 43000 --mels 8 "
              "--frame-len 512")
              .exit_code == 0);

  const RunResult vo =
      run("viz-offsets --ckpt cli_run_a/model.dckp --spec viz.spec --out offs.csv");
  CHECK(vo.exit_code == 0);
  std::ifstream is("offs.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "group,gi,gj,ref_y,ref_x,dy,dx");

  // The micro model has no learned adaptor, so viz-adaptor must refuse it.
  const RunResult va_bad =
      run("viz-adaptor --ckpt cli_run_a/model.dckp --spec viz.spec --out aday");
  CHECK(va_bad.exit_code == 2);

  // Retrain with the adaptor enabled and render the three images.
  const RunResult tr = run(
      "train --config micro.cfg --seed 5 --out cli_run_ad --set adaptor.enabled=true");
  REQUIRE(tr.exit_code == 0);
  const RunResult va =
      run("viz-adaptor --ckpt cli_run_ad/model.dckp --spec viz.spec --out ada");
  CHECK(va.exit_code == 0);
  for (const char* suffix : {"_before.pgm", "_after.pgm", "_diff.pgm"}) {
    std::ifstream pgm(std::string("ada") + suffix, std::ios::binary);
    REQUIRE(pgm.good());
    std::string magic(2, '\0');
    pgm.read(magic.data(), 2);
    CHECK(magic == "P5");
    std::remove((std::string("ada") + suffix).c_str());
  }
  std::remove("viz_in.f32");
  std::remove("viz.spec");
  std::remove("offs.csv");
  std::filesystem::remove_all("cli_run_a");
  std::filesystem::remove_all("cli_run_ad");
}

TEST_CASE("ablate emits the six-row csv") {
  write_micro_config("micro.cfg");
  const RunResult r = run("ablate --config micro.cfg --seed 5 --out cli_abl --epochs 1");
  REQUIRE(r.exit_code == 0);
  std::ifstream is("cli_abl/ablation.csv");
  REQUIRE(is.good());
  std::string line;
  std::getline(is, line);
  CHECK(line == "model,lambda,top1,top5,config_hash");
  std::size_t rows = 0;
  bool saw_no_deform = false, saw_lambda = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++rows;
    if (line.find("without deformable") != std::string::npos) saw_no_deform = true;
    if (line.find("lambda=0.005") != std::string::npos) saw_lambda = true;
  }
  CHECK(rows == 6);
  CHECK(saw_no_deform);
  CHECK(saw_lambda);
  std::filesystem::remove_all("cli_abl");
}

TEST_CASE("bad flags and unknown config keys fail with exit code 2") {
  const RunResult bad_flag = run("train --no-such-flag");
  CHECK(bad_flag.exit_code == 2);

  write_micro_config("micro.cfg");
  const RunResult bad_key = run("train --config micro.cfg --set data.melz=9 --out cli_x");
  CHECK(bad_key.exit_code == 2);
  CHECK(bad_key.output.find("data.melz") != std::string::npos);

  {
    std::ofstream os("bad.cfg");
    os << "model.not_a_key = 3\n";
  }
  const RunResult bad_cfg = run("train --config bad.cfg --out cli_x");
  CHECK(bad_cfg.exit_code == 2);
  CHECK(bad_cfg.output.find("model.not_a_key") != std::string::npos);
  std::remove("bad.cfg");
  std::remove("micro.cfg");
}

TEST_CASE("missing input files fail with exit code 3") {
  const RunResult r = run("eval --ckpt does_not_exist.dckp");
  CHECK(r.exit_code == 3);
}

TEST_CASE("numeric blowup during training exits with code 4") {
  write_micro_config("micro.cfg");
  // An absurd learning rate overflows the activations within two epochs.
  const RunResult r = run(
      "train --config micro.cfg --seed 5 --out cli_nan --set train.lr=1e155 "
      "--epochs 3");
  CHECK(r.exit_code == 4);
  std::filesystem::remove_all("cli_nan");
  std::remove("micro.cfg");
}

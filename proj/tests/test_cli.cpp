#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "rlseg/chan_vese.hpp"
#include "rlseg/eval.hpp"
#include "rlseg/pgm.hpp"
#include "rlseg/rls_model.hpp"
#include "rlseg/run_config.hpp"
#include "test_util.hpp"

using namespace rlseg;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

// Runs the real binary; stdout+stderr captured.
RunResult run_cli(const std::string& args, const std::string& workdir) {
  const std::string out_path = workdir + "/cli_output.txt";
  const std::string cmd = std::string("cd ") + workdir + " && " + RLSEG_CLI_PATH +
                          " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = testutil::read_file_bytes(out_path);
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("cli: gen-data determinism, counts, and no-clobber") {
  testutil::TempDir dir("cligen");
  write_text(dir.str("cfg.json"),
             R"({"seed": 7, "data": {"count": 10, "height": 12, "width": 12}})");

  const RunResult a = run_cli("gen-data --config cfg.json --out dsA", dir.str());
  CHECK(a.code == 0);
  CHECK(a.output.find("5 train / 5 test") != std::string::npos);
  const RunResult b = run_cli("gen-data --config cfg.json --out dsB", dir.str());
  CHECK(b.code == 0);
  CHECK(testutil::read_file_bytes(dir.str("dsA/manifest.json")) ==
        testutil::read_file_bytes(dir.str("dsB/manifest.json")));

  // Existing non-empty output without --force.
  const RunResult c = run_cli("gen-data --config cfg.json --out dsA", dir.str());
  CHECK(c.code == 3);
  const RunResult d = run_cli("gen-data --config cfg.json --out dsA --force", dir.str());
  CHECK(d.code == 0);
}

TEST_CASE("cli: missing config file exits 2 and names the path") {
  testutil::TempDir dir("clicfg");
  const RunResult r = run_cli("gen-data --config missing.json --out ds", dir.str());
  CHECK(r.code == 2);
  CHECK(r.output.find("missing.json") != std::string::npos);
}

TEST_CASE("cli: train, checkpoint, resume schedule, zero epochs") {
  testutil::TempDir dir("clitrain");
  write_text(dir.str("cfg.json"),
             R"({"seed": 5, "data": {"count": 6, "height": 8, "width": 8},
                 "train": {"epochs": 2, "halve_every": 2}})");
  REQUIRE(run_cli("gen-data --config cfg.json --out ds", dir.str()).code == 0);

  // Zero epochs: checkpoint equals the fresh seeded initialization.
  const RunResult r0 =
      run_cli("train --model rls --data ds --config cfg.json --out zero.bin --epochs 0",
              dir.str());
  CHECK(r0.code == 0);
  const LoadedParams lp = load_params(dir.str("zero.bin"));
  const RunConfig cfg = load_run_config(dir.str("cfg.json"));
  RlsConfig rc = cfg.rls;
  rc.height = 8;
  rc.width = 8;
  const ParamSet fresh = init_params(rc);
  CHECK(testutil::same_bits(lp.params.Uz, fresh.Uz));
  CHECK(testutil::same_bits(lp.params.V, fresh.V));

  // Train 2 epochs, then resume 2 more: the resumed history continues the
  // epoch numbering and the halved learning rate.
  const RunResult r1 = run_cli(
      "train --model rls --data ds --config cfg.json --out ck.bin", dir.str());
  CHECK(r1.code == 0);
  const RunResult r2 = run_cli(
      "train --model rls --data ds --config cfg.json --out ck2.bin --resume ck.bin",
      dir.str());
  CHECK(r2.code == 0);
  const std::string hist = testutil::read_file_bytes(dir.str("ck2.bin.history.csv"));
  CHECK(hist.find("\n2,0.0005,") != std::string::npos);  // lr_schedule(2) = 5e-4
  CHECK(hist.find("\n3,0.0005,") != std::string::npos);

  // History CSV has one row per epoch plus header.
  const std::string h1 = testutil::read_file_bytes(dir.str("ck.bin.history.csv"));
  CHECK(std::count(h1.begin(), h1.end(), '\n') == 3);

  // fcn path works too.
  const RunResult r3 = run_cli(
      "train --model fcn --data ds --config cfg.json --out fcn.bin", dir.str());
  CHECK(r3.code == 0);
}

TEST_CASE("cli: segment") {
  testutil::TempDir dir("cliseg");
  const Field img = testutil::disk_image(64, 64, 0.5, 0.5, 0.25);
  write_pgm(img, dir.str("disk.pgm"));

  const RunResult r = run_cli(
      "segment --method cls --input disk.pgm --out mask.pgm --trace trace.csv",
      dir.str());
  CHECK(r.code == 0);
  CHECK(r.output.find("inference_s=") != std::string::npos);
  const Field mask = read_pgm(dir.str("mask.pgm"));
  Field gt = img;
  CHECK(f_measure(mask, gt).f >= 0.98);
  for (double v : mask.values) CHECK((v == 0.0 || v == 1.0));
  const std::string trace = testutil::read_file_bytes(dir.str("trace.csv"));
  CHECK(trace.rfind("iter,energy\n", 0) == 0);

  // rls without a checkpoint is a usage error.
  const RunResult r2 =
      run_cli("segment --method rls --input disk.pgm --out m.pgm", dir.str());
  CHECK(r2.code == 2);

  // Mismatched checkpoint grid is a shape error.
  RlsConfig rc;
  rc.height = 8;
  rc.width = 8;
  save_params(init_params(rc), 5, dir.str("p8.bin"));
  const RunResult r3 = run_cli(
      "segment --method rls --input disk.pgm --ckpt p8.bin --out m.pgm", dir.str());
  CHECK(r3.code == 4);

  // Unreadable input is an I/O error.
  const RunResult r4 =
      run_cli("segment --method cls --input nope.pgm --out m.pgm", dir.str());
  CHECK(r4.code == 3);
}

TEST_CASE("cli: eval rejects unknown methods and writes the exact CSV header") {
  testutil::TempDir dir("clieval");
  write_text(dir.str("cfg.json"),
             R"({"seed": 3, "data": {"count": 4, "height": 8, "width": 8},
                 "cls": {"max_iters": 30}})");
  REQUIRE(run_cli("gen-data --config cfg.json --out ds", dir.str()).code == 0);

  const RunResult bad =
      run_cli("eval --data ds --methods frobnicate --out r.csv", dir.str());
  CHECK(bad.code == 2);
  CHECK(bad.output.find("cls, rls, fcn") != std::string::npos);

  const RunResult missing =
      run_cli("eval --data ds --methods rls --out r.csv", dir.str());
  CHECK(missing.code == 2);

  const RunResult ok = run_cli(
      "eval --data ds --methods cls --out out/results.csv --config cfg.json",
      dir.str());
  CHECK(ok.code == 0);
  const std::string csv = testutil::read_file_bytes(dir.str("out/results.csv"));
  CHECK(csv.substr(0, csv.find('\n')) ==
        "method,precision,recall,fmeasure,iou,mean_time_s,median_time_s");
  CHECK(testutil::read_file_bytes(dir.str("out/manifest.json")) ==
        testutil::read_file_bytes(dir.str("ds/manifest.json")));
  CHECK(!testutil::read_file_bytes(dir.str("out/run_meta.json")).empty());
}

TEST_CASE("cli: gradcheck exits by result") {
  testutil::TempDir dir("cligc");
  const RunResult ok = run_cli("gradcheck --grid 5 --steps 2", dir.str());
  CHECK(ok.code == 0);
  CHECK(ok.output.find("PASS") != std::string::npos);
  CHECK(ok.output.find("block") != std::string::npos);

  const RunResult fail = run_cli("gradcheck --grid 5 --steps 2 --tol 0", dir.str());
  CHECK(fail.code == 1);

  const RunResult fcn = run_cli("gradcheck --model fcn --grid 6", dir.str());
  CHECK(fcn.code == 0);

  const RunResult full = run_cli("gradcheck --mode full --grid 5 --steps 2", dir.str());
  CHECK(full.code == 0);
}

TEST_CASE("cli: RLS_SEED environment override") {
  testutil::TempDir dir("cliseed");
  write_text(dir.str("cfg.json"),
             R"({"seed": 1, "data": {"count": 4, "height": 8, "width": 8}})");
  const std::string prefix = "RLS_SEED=99 ";
  const std::string out_path = dir.str("env_out.txt");
  const std::string cmd = "cd " + dir.str() + " && RLS_SEED=99 " + RLSEG_CLI_PATH +
                          " gen-data --config cfg.json --out ds99 > " + out_path +
                          " 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  write_text(dir.str("cfg99.json"),
             R"({"seed": 99, "data": {"count": 4, "height": 8, "width": 8}})");
  REQUIRE(run_cli("gen-data --config cfg99.json --out dsX", dir.str()).code == 0);
  CHECK(testutil::read_file_bytes(dir.str("ds99/manifest.json")) ==
        testutil::read_file_bytes(dir.str("dsX/manifest.json")));
}

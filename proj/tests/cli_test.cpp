// End-to-end tests of the command-line binary: every subcommand is
// driven through a shell the way a user would run it, and the checks
// are on exit codes, emitted files, and byte-level reproducibility.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kBin = FLOWGNN_CLI_BIN;
const std::string kFixtures = FLOWGNN_FIXTURE_DIR;
const std::string kSchemas = FLOWGNN_SCHEMA_DIR;

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("flowgnn_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
};

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file: " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI through /bin/sh, capturing both streams.
RunResult run(const std::string& args, const TempDir& scratch) {
  const std::string out_file = scratch.str("stdout.capture");
  const std::string err_file = scratch.str("stderr.capture");
  const std::string cmd = "\"" + kBin + "\" " + args + " > \"" + out_file +
                          "\" 2> \"" + err_file + "\"";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string unsw_csv() { return kFixtures + "/unsw_mini.csv"; }
std::string unsw_schema() { return kSchemas + "/unsw_nb15.schema"; }

// Prepares the 40-flow fixture into <dir>/prep and returns the bundle
// path. Small model flags keep the training tests quick.
std::string prepare_fixture(const TempDir& t, int seed = 7) {
  RunResult r = run("prepare --dataset \"" + unsw_csv() + "\" --schema \"" +
                        unsw_schema() + "\" --out " + t.str("prep") +
                        " --seed " + std::to_string(seed),
                    t);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return t.str("prep") + "/bundle";
}

const char* kSmallModel =
    " --hidden 8 --layers 2 --heads 2 --head-dim 4 --window 2 "
    "--embed-rank 4 --diffusion-order 1 --dropout 0.0 --batch-size 16 ";

}  // namespace

TEST_CASE("prepare writes bundle, graph export, summary, and config") {
  TempDir t;
  RunResult r = run("prepare --dataset \"" + unsw_csv() + "\" --schema \"" +
                        unsw_schema() + "\" --out " + t.str("prep") +
                        " --seed 7",
                    t);
  CAPTURE(r.err);
  CHECK(r.code == 0);
  for (const char* f : {"bundle/meta.txt", "bundle/train.fgt",
                        "bundle/val.fgt", "bundle/test.fgt", "summary.txt",
                        "edges.txt", "config.txt"}) {
    CHECK_MESSAGE(fs::exists(t.path / "prep" / f), f);
  }
  const std::string summary = slurp(t.path / "prep" / "summary.txt");
  CHECK(summary.find("flows 40") != std::string::npos);
  CHECK(summary.find("classes 10") != std::string::npos);
  CHECK(summary.find("stratified yes") != std::string::npos);
  CHECK(summary.find("class,count,share") != std::string::npos);
  CHECK(summary.find("Normal,12,") != std::string::npos);
  // Alias folding: "Backdoors" and " Backdoor " are one class.
  CHECK(summary.find("Backdoor,2,") != std::string::npos);
  CHECK(summary.find("warning") == std::string::npos);
  CHECK(r.out == summary);  // same text on stdout

  // The edge export header matches the summary's line-graph counts.
  std::istringstream edges(slurp(t.path / "prep" / "edges.txt"));
  std::size_t nodes = 0, edge_count = 0;
  edges >> nodes >> edge_count;
  CHECK(nodes == 40);
  std::ostringstream want;
  want << "line_edges " << edge_count << "\n";
  CHECK(summary.find(want.str()) != std::string::npos);
}

TEST_CASE("prepare refuses to overwrite a bundle unless forced") {
  TempDir t;
  prepare_fixture(t);
  RunResult again = run("prepare --dataset \"" + unsw_csv() +
                            "\" --schema \"" + unsw_schema() + "\" --out " +
                            t.str("prep") + " --seed 7",
                        t);
  CHECK(again.code == 2);
  CHECK(again.err.find("--force") != std::string::npos);
  RunResult forced = run("prepare --dataset \"" + unsw_csv() +
                             "\" --schema \"" + unsw_schema() + "\" --out " +
                             t.str("prep") + " --seed 7 --force",
                         t);
  CHECK(forced.code == 0);
}

TEST_CASE("prepare warns when the data holds a single class") {
  TempDir t;
  std::ofstream csv(t.path / "flat.csv");
  csv << "srcip,sport,dstip,dsport,stime,dur,proto,sbytes,label,attack_cat\n";
  for (int i = 0; i < 12; ++i) {
    csv << "10.0.0." << i << ",1000," << "192.168.0.1,80," << (1000 + i)
        << ".0,1.5,tcp,100,0,Normal\n";
  }
  csv.close();
  RunResult r = run("prepare --dataset " + t.str("flat.csv") + " --schema \"" +
                        kSchemas + "/../tests/fixtures/mini.schema\" --out " +
                        t.str("prep") + " --seed 1",
                    t);
  CAPTURE(r.err);
  CHECK(r.code == 0);
  CHECK(r.out.find("warning: single-class data") != std::string::npos);
}

TEST_CASE("schema mismatch names the missing column and exits 2") {
  TempDir t;
  RunResult r = run("prepare --dataset \"" + kFixtures +
                        "/mini.csv\" --schema \"" + unsw_schema() +
                        "\" --out " + t.str("prep"),
                    t);
  CHECK(r.code == 2);
  CHECK(r.err.find("missing column") != std::string::npos);
}

TEST_CASE("equal seeds give byte-identical training runs") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);
  const std::string train_args = "train --bundle " + bundle +
                                 " --model gat --epochs 2 --lr 0.01" +
                                 kSmallModel + "--seed 7 --out ";
  REQUIRE(run(train_args + t.str("r1"), t).code == 0);
  REQUIRE(run(train_args + t.str("r2"), t).code == 0);
  CHECK(slurp(t.path / "r1/history.txt") == slurp(t.path / "r2/history.txt"));
  CHECK(slurp(t.path / "r1/checkpoint.fgck") ==
        slurp(t.path / "r2/checkpoint.fgck"));
  CHECK(slurp(t.path / "r1/config.txt") == slurp(t.path / "r2/config.txt"));

  RunResult other = run("train --bundle " + bundle +
                            " --model gat --epochs 2 --lr 0.01" + kSmallModel +
                            "--seed 8 --out " + t.str("r3"),
                        t);
  REQUIRE(other.code == 0);
  CHECK(slurp(t.path / "r1/history.txt") != slurp(t.path / "r3/history.txt"));

  // A run directory refuses silent overwrite, like prepare.
  RunResult repeat = run(train_args + t.str("r1"), t);
  CHECK(repeat.code == 2);
  CHECK(repeat.err.find("--force") != std::string::npos);
}

TEST_CASE("train maps failure families onto distinct exit codes") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);

  RunResult missing = run("train --bundle " + t.str("nowhere") +
                              " --model gat --out " + t.str("x"),
                          t);
  CHECK(missing.code == 3);

  RunResult badmodel = run("train --bundle " + bundle +
                               " --model transformer --out " + t.str("x"),
                           t);
  CHECK(badmodel.code == 2);
  CHECK(badmodel.err.find("transformer") != std::string::npos);

  RunResult badsizes = run("train --bundle " + bundle +
                               " --model gat --sample-sizes 8,8,8,8" +
                               kSmallModel + "--out " + t.str("x"),
                           t);
  CHECK(badsizes.code == 2);

  RunResult diverged = run("train --bundle " + bundle +
                               " --model gat --epochs 1 --lr 1e200" +
                               kSmallModel + "--out " + t.str("x"),
                           t);
  CHECK(diverged.code == 4);
  CHECK(diverged.err.find("diverged") != std::string::npos);
  CHECK_FALSE(fs::exists(t.path / "x" / "checkpoint.fgck"));
}

TEST_CASE("evaluate writes idempotent reports for both tasks") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);
  REQUIRE(run("train --bundle " + bundle + " --model gtcn_g --task multi "
              "--epochs 2 --lr 0.01" + kSmallModel + "--seed 3 --out " +
                  t.str("multi"),
              t).code == 0);
  REQUIRE(run("train --bundle " + bundle + " --model egraphsage_m --task "
              "binary --epochs 2 --lr 0.05" + kSmallModel +
                  "--seed 3 --out " + t.str("bin"),
              t).code == 0);

  RunResult ev1 = run("evaluate --run " + t.str("multi") + " --split test", t);
  CAPTURE(ev1.err);
  CHECK(ev1.code == 0);
  const fs::path multi_report = t.path / "multi/report_test_multi.txt";
  REQUIRE(fs::exists(multi_report));
  const std::string first = slurp(multi_report);
  CHECK(first.find("weighted_f1 ") != std::string::npos);
  CHECK(first.find("confusion,Normal,") != std::string::npos);
  // 10-class confusion block: header + 10 rows.
  CHECK(ev1.out.find("Shellcode,") != std::string::npos);

  RunResult ev2 = run("evaluate --run " + t.str("multi") + " --split test", t);
  CHECK(ev2.code == 0);
  CHECK(slurp(multi_report) == first);  // regeneration is idempotent

  RunResult evb = run("evaluate --run " + t.str("bin") + " --split val", t);
  CHECK(evb.code == 0);
  const std::string bin_report = slurp(t.path / "bin/report_val_binary.txt");
  CHECK(bin_report.find("binary_f1 ") != std::string::npos);
  CHECK(bin_report.find("confusion,normal,attack") != std::string::npos);

  RunResult badsplit =
      run("evaluate --run " + t.str("bin") + " --split holdout", t);
  CHECK(badsplit.code == 2);
}

TEST_CASE("evaluate rejects a checkpoint of a different architecture") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);
  REQUIRE(run("train --bundle " + bundle + " --model gat --epochs 1 "
              "--lr 0.01" + kSmallModel + "--out " + t.str("run"),
              t).code == 0);
  // Doctor the stored config to claim another architecture; the
  // checkpoint header must win and the mismatch must be a config error.
  const fs::path cfg_path = t.path / "run/config.txt";
  std::string cfg = slurp(cfg_path);
  const auto at = cfg.find("model gat");
  REQUIRE(at != std::string::npos);
  cfg.replace(at, 9, "model gtcn_g");
  std::ofstream(cfg_path) << cfg;

  RunResult r = run("evaluate --run " + t.str("run") + " --split test", t);
  CHECK(r.code == 2);
  CHECK(r.err.find("checkpoint") != std::string::npos);
}

TEST_CASE("report merges runs and marks absent metrics") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);
  REQUIRE(run("train --bundle " + bundle + " --model gtcn_g --task multi "
              "--epochs 2 --lr 0.01" + kSmallModel + "--seed 3 --out " +
                  t.str("multi"),
              t).code == 0);
  REQUIRE(run("train --bundle " + bundle + " --model egraphsage_m --task "
              "binary --epochs 2 --lr 0.05" + kSmallModel +
                  "--seed 3 --out " + t.str("bin"),
              t).code == 0);
  REQUIRE(run("evaluate --run " + t.str("multi") + " --split test", t).code ==
          0);
  REQUIRE(run("evaluate --run " + t.str("bin") + " --split test", t).code ==
          0);

  RunResult rep = run("report " + t.str("multi") + " " + t.str("bin") +
                          " --split test --out " + t.str("table.csv"),
                      t);
  CAPTURE(rep.err);
  CHECK(rep.code == 0);
  CHECK(rep.out.find("dataset,model,binary_f1,multi_weighted_f1") !=
        std::string::npos);
  CHECK(slurp(t.path / "table.csv") == rep.out);

  // Table cells are verbatim copies of the report files' values.
  const std::string multi_report = slurp(t.path / "multi/report_test_multi.txt");
  const auto key = multi_report.find("weighted_f1 ");
  REQUIRE(key != std::string::npos);
  const std::string value = multi_report.substr(
      key + 12, multi_report.find('\n', key) - key - 12);
  CHECK(rep.out.find("unsw_nb15,gtcn_g,-," + value + "\n") !=
        std::string::npos);
  CHECK(rep.out.find("unsw_nb15,egraphsage_m,") != std::string::npos);
  // The binary-only run has no multiclass report: absent marker, not 0.
  CHECK(rep.out.find(",egraphsage_m,") != std::string::npos);
  {
    std::istringstream lines(rep.out);
    std::string line;
    bool saw_sage = false;
    while (std::getline(lines, line)) {
      if (line.find("egraphsage_m") != std::string::npos) {
        saw_sage = true;
        CHECK(line.substr(line.size() - 2) == ",-");  // multi cell absent
      }
    }
    CHECK(saw_sage);
  }

  RunResult none = run("report " + t.str("emptydir"), t);
  CHECK(none.code == 2);
}

TEST_CASE("config files feed subcommands and flags win over them") {
  TempDir t;
  const std::string bundle = prepare_fixture(t);
  std::ofstream(t.path / "cfg.txt")
      << "model gat\ntask binary\nepochs 2\nbatch_size 16\nseed 4\n"
      << "hidden 8\nlayers 2\nheads 2\nhead_dim 4\ndropout 0\n";
  RunResult r = run("train --config " + t.str("cfg.txt") + " --bundle " +
                        bundle + " --epochs 1 --out " + t.str("run"),
                    t);
  CAPTURE(r.err);
  CHECK(r.code == 0);
  const std::string stored = slurp(t.path / "run/config.txt");
  CHECK(stored.find("model gat\n") != std::string::npos);   // from file
  CHECK(stored.find("task binary\n") != std::string::npos); // from file
  CHECK(stored.find("epochs 1\n") != std::string::npos);    // flag wins
  CHECK(stored.find("seed 4\n") != std::string::npos);      // from file
  CHECK(stored.find("dataset_name unsw_nb15\n") != std::string::npos);

  std::ofstream(t.path / "bad.txt") << "epoch 3\n";
  RunResult bad = run("train --config " + t.str("bad.txt") + " --bundle " +
                          bundle + " --out " + t.str("run2"),
                      t);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("unknown config key") != std::string::npos);
}

TEST_CASE("the data-root env var resolves relative inputs") {
  TempDir t;
  RunResult r = run("prepare --dataset unsw_mini.csv --schema \"" +
                        unsw_schema() + "\" --out " + t.str("prep"),
                    t);
  CHECK(r.code == 3);  // bare name resolves nowhere without the root

  const std::string cmd = "FLOWGNN_DATA_ROOT=\"" + kFixtures +
                          "\" \"" + kBin + "\" prepare --dataset "
                          "unsw_mini.csv --schema \"" + unsw_schema() +
                          "\" --out " + t.str("prep2") + " > " +
                          t.str("o.txt") + " 2> " + t.str("e.txt");
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(t.path / "prep2/bundle/meta.txt"));
}

TEST_CASE("help and bad flags use the expected exit codes") {
  TempDir t;
  CHECK(run("--help", t).code == 0);
  CHECK(run("train --help", t).code == 0);
  CHECK(run("frobnicate", t).code == 2);
  CHECK(run("train --no-such-flag 1", t).code == 2);
  CHECK(run("", t).code == 2);  // a subcommand is required
}

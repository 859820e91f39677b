#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rgcn/cli.hpp"
#include "rgcn/data.hpp"
#include "rgcn/graph.hpp"
#include "rgcn/models.hpp"

using namespace rgcn;

namespace {

namespace fs = std::filesystem;

// Fresh per-case scratch directory; also clears the global seed override so
// an inherited environment cannot skew seeded scenarios.
fs::path scratch(const char* name) {
  unsetenv("RGCN_SEED");
  const fs::path dir = fs::temp_directory_path() / "rgcn_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Drive the tool in-process with its chatter routed to /dev/null.
int run(const std::vector<std::string>& args) {
  std::fflush(stdout);
  std::fflush(stderr);
  const int saved_out = dup(1);
  const int saved_err = dup(2);
  FILE* sink = std::fopen("/dev/null", "w");
  REQUIRE(sink != nullptr);
  dup2(fileno(sink), 1);
  dup2(fileno(sink), 2);
  const int rc = cli_run(args);
  std::fflush(stdout);
  std::fflush(stderr);
  dup2(saved_out, 1);
  dup2(saved_err, 2);
  close(saved_out);
  close(saved_err);
  std::fclose(sink);
  return rc;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  return parse_kv_lines(read_file(p));
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// synth classification corpus + a small trained run shared by several cases
struct TrainedRun {
  fs::path dir;
  std::string train_x, train_labels, test_x, test_labels, graph, run;
};

const TrainedRun& trained_run() {
  static const TrainedRun fixture = [] {
    TrainedRun t;
    t.dir = scratch("trained_run");
    const std::string ds = (t.dir / "ds").string();
    REQUIRE(run({"synth", "--kind", "classification", "--vertices", "24", "--samples", "80",
                 "--classes", "2", "--k", "4", "--seed", "7", "--out", ds}) == 0);
    t.train_x = ds + ".train.x.dmat";
    t.train_labels = ds + ".train.labels";
    t.test_x = ds + ".test.x.dmat";
    t.test_labels = ds + ".test.labels";
    t.graph = ds + ".graph.edges";
    t.run = (t.dir / "run").string();
    REQUIRE(run({"train", "--x", t.train_x, "--graph", t.graph, "--labels", t.train_labels,
                 "--test_x", t.test_x, "--test_labels", t.test_labels, "--conv", "6:4:2",
                 "--fc", "8", "--epochs", "4", "--batch", "20", "--lr", "0.01", "--repeats",
                 "2", "--seed", "5", "--out", t.run}) == 0);
    return t;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("masking corruption hits exactly the requested fraction of each row") {
  const fs::path dir = scratch("mask_fraction");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "cor").string();
  save_matrix(in, Mat::Zero(40, 50));
  REQUIRE(run({"corrupt", "--input", in, "--kind", "masking", "--level", "0.2", "--value",
               "7", "--seed", "3", "--out", out}) == 0);

  const Mat y = load_matrix(out + ".dmat");
  REQUIRE(y.rows() == 40);
  REQUIRE(y.cols() == 50);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    int hit = 0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (y(i, j) == 7.0) ++hit;
      else CHECK(y(i, j) == 0.0);
    }
    CHECK(hit == 10);  // floor(0.2 * 50) per row
  }
  const auto manifest = read_kv(out + ".manifest");
  CHECK(manifest.at("changed") == "400");
  CHECK(read_kv(out + ".config").at("level") == "0.20000000000000001");
}

TEST_CASE("corrupting at level zero is a bit-exact copy") {
  const fs::path dir = scratch("mask_zero");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "cor").string();
  Rng rng(4);
  save_matrix(in, rng.normal_matrix(17, 11));
  REQUIRE(run({"corrupt", "--input", in, "--level", "0", "--seed", "9", "--out", out}) == 0);
  CHECK(read_file(in) == read_file(out + ".dmat"));
}

TEST_CASE("an out-of-range corruption level is a usage error") {
  const fs::path dir = scratch("mask_bad_level");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "cor").string();
  save_matrix(in, Mat::Zero(4, 4));
  CHECK(run({"corrupt", "--input", in, "--level", "1.5", "--out", out}) == 2);
  CHECK_FALSE(fs::exists(out + ".dmat"));
}

TEST_CASE("gaussian corruption reproduces bitwise from its seed") {
  const fs::path dir = scratch("gauss_seed");
  const std::string in = (dir / "x.dmat").string();
  Rng rng(12);
  save_matrix(in, rng.normal_matrix(9, 13));
  const std::vector<std::string> base{"corrupt", "--input", in,        "--kind", "gaussian",
                                      "--level", "0.5",     "--seed",  "11"};
  auto with_out = [&](const std::string& out) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(out);
    return args;
  };
  REQUIRE(run(with_out((dir / "a").string())) == 0);
  REQUIRE(run(with_out((dir / "b").string())) == 0);
  CHECK(read_file(dir / "a.dmat") == read_file(dir / "b.dmat"));

  std::vector<std::string> other = with_out((dir / "c").string());
  other[8] = "12";  // the seed value
  REQUIRE(run(other) == 0);
  CHECK(read_file(dir / "a.dmat") != read_file(dir / "c.dmat"));
}

TEST_CASE("decomposing a zero matrix converges at once") {
  const fs::path dir = scratch("decompose_zero");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "dec").string();
  save_matrix(in, Mat::Zero(16, 8));
  REQUIRE(run({"decompose", "--input", in, "--lambda", "0.1", "--out", out}) == 0);

  const auto manifest = read_kv(out + ".manifest");
  CHECK(manifest.at("converged") == "1");
  CHECK(std::stod(manifest.at("residual")) <= 1e-2);
  CHECK(load_matrix(out + ".E.dmat").norm() == 0.0);
  CHECK(load_matrix(out + ".L.dmat").norm() <= 1e-2);
}

TEST_CASE("the decomposition separates a planted sparse support from a low-rank part") {
  const fs::path dir = scratch("decompose_planted");
  const std::string fix = (dir / "fix").string();
  REQUIRE(run({"synth", "--kind", "lowrank", "--rows", "20", "--cols", "20", "--rank", "1",
               "--spike_fraction", "0.05", "--spike_magnitude", "10", "--seed", "3", "--out",
               fix}) == 0);
  const std::string out = (dir / "dec").string();
  REQUIRE(run({"decompose", "--input", fix + ".x.dmat", "--lambda", "0.5", "--ae_hidden",
               "1", "--lr", "0.02", "--lr_decay", "1.0", "--inner_epochs", "100", "--tol",
               "0.06", "--out", out}) == 0);

  const Mat e0 = load_matrix(fix + ".e0.dmat");
  const Mat l0 = load_matrix(fix + ".l0.dmat");
  const Mat e = load_matrix(out + ".E.dmat");
  const Mat l = load_matrix(out + ".L.dmat");
  int tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const bool truth = e0(i, j) != 0.0;
      const bool pred = e(i, j) != 0.0;
      tp += truth && pred;
      fp += !truth && pred;
      fn += truth && !pred;
    }
  }
  REQUIRE(tp + fn == 20);  // floor(0.05 * 400) planted spikes
  const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  CHECK(f1 >= 0.9);
  CHECK((l - l0).norm() / l0.norm() <= 0.1);
  CHECK(read_kv(out + ".manifest").at("converged") == "1");
}

TEST_CASE("an exhausted decomposition budget is reported, not failed") {
  const fs::path dir = scratch("decompose_budget");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "dec").string();
  Rng rng(2);
  save_matrix(in, rng.normal_matrix(12, 10));
  REQUIRE(run({"decompose", "--input", in, "--lambda", "0.3", "--tol", "1e-9", "--max_outer",
               "1", "--out", out}) == 0);
  const auto manifest = read_kv(out + ".manifest");
  CHECK(manifest.at("converged") == "0");
  CHECK(manifest.at("outer_iters") == "1");
  CHECK(fs::exists(out + ".L.dmat"));
  CHECK(fs::exists(out + ".E.dmat"));
}

TEST_CASE("training writes per-epoch metrics, a summary table, and checkpoints") {
  const TrainedRun& t = trained_run();
  CHECK(fs::exists(t.run + ".config"));
  CHECK(fs::exists(t.run + ".r0.ckpt"));
  CHECK(fs::exists(t.run + ".r1.ckpt"));

  const std::string metrics = read_file(t.run + ".metrics");
  CHECK(metrics.rfind("repeat=0 epoch=0 ce=", 0) == 0);
  CHECK(metrics.find(" train_accuracy=") != std::string::npos);
  CHECK(metrics.find(" test_accuracy=") != std::string::npos);
  CHECK(metrics.find("repeat=1 epoch=3 ") != std::string::npos);
  CHECK(metrics.find("final_train_accuracy=") != std::string::npos);

  std::istringstream summary(read_file(t.run + ".summary.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(summary, line);) lines.push_back(line);
  REQUIRE(lines.size() == 4);  // header, two repeats, mean
  CHECK(lines[0] == "repeat,train_accuracy,test_accuracy");
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[2].rfind("1,", 0) == 0);
  CHECK(lines[3].rfind("mean,", 0) == 0);

  const auto resolved = read_kv(t.run + ".config");
  CHECK(resolved.at("arch") == "gcn");
  CHECK(resolved.at("epochs") == "4");
  CHECK(resolved.at("batch") == "20");
  CHECK(resolved.at("classes") == "2");
  CHECK(resolved.at("dims") == "24");
  CHECK(resolved.at("repeats") == "2");
  CHECK(resolved.at("seed") == "5");
}

TEST_CASE("a stored run configuration reproduces the metrics byte for byte") {
  const TrainedRun& t = trained_run();
  const std::string again = (t.dir / "again").string();
  REQUIRE(run({"train", t.run + ".config", "--out", again}) == 0);
  CHECK(read_file(again + ".metrics") == read_file(t.run + ".metrics"));
  CHECK(read_file(again + ".summary.csv") == read_file(t.run + ".summary.csv"));
  CHECK(read_file(again + ".r0.ckpt") == read_file(t.run + ".r0.ckpt"));
}

TEST_CASE("the environment seed wins over files and flags") {
  const fs::path dir = scratch("env_seed");
  const std::string plain = (dir / "plain").string();
  REQUIRE(run({"synth", "--kind", "lowrank", "--seed", "5", "--out", plain}) == 0);
  CHECK(read_kv(plain + ".config").at("seed") == "5");

  setenv("RGCN_SEED", "123", 1);
  const std::string forced = (dir / "forced").string();
  const int rc = run({"synth", "--kind", "lowrank", "--seed", "5", "--out", forced});
  unsetenv("RGCN_SEED");
  REQUIRE(rc == 0);
  CHECK(read_kv(forced + ".config").at("seed") == "123");
  CHECK(read_file(forced + ".x.dmat") != read_file(plain + ".x.dmat"));
}

TEST_CASE("unknown keys fail fast") {
  const TrainedRun& t = trained_run();
  CHECK(run({"train", t.run + ".config", "--out", (t.dir / "junk").string(), "--frobnicate",
             "1"}) == 2);

  const fs::path dir = scratch("unknown_key");
  const std::string in = (dir / "x.dmat").string();
  save_matrix(in, Mat::Zero(3, 3));
  const fs::path cfg = dir / "run.config";
  write_file(cfg, "input = " + in + "\nlevel = 0.1\nfrobnicate = 1\nout = " +
                      (dir / "cor").string() + "\n");
  CHECK(run({"corrupt", cfg.string()}) == 2);
}

TEST_CASE("command-line flags override the config file") {
  const fs::path dir = scratch("flag_override");
  const std::string in = (dir / "x.dmat").string();
  const std::string out = (dir / "cor").string();
  Rng rng(8);
  save_matrix(in, rng.normal_matrix(6, 9));
  const fs::path cfg = dir / "run.config";
  write_file(cfg, "input = " + in + "\nlevel = 0.9\nvalue = 5\nseed = 2\nout = " + out + "\n");
  REQUIRE(run({"corrupt", cfg.string(), "--level", "0"}) == 0);
  CHECK(read_file(out + ".dmat") == read_file(in));
  CHECK(read_kv(out + ".config").at("level") == "0");
}

TEST_CASE("the gradient audit passes on the toy problem") {
  const fs::path dir = scratch("gradcheck");
  const std::string plain = (dir / "plain").string();
  REQUIRE(run({"gradcheck", "--seed", "9", "--out", plain}) == 0);
  const auto metrics = read_kv(plain + ".metrics");
  CHECK(metrics.at("ok") == "1");
  CHECK(std::stod(metrics.at("max_rel_err")) <= 1e-4);

  const std::string robust = (dir / "robust").string();
  CHECK(run({"gradcheck", "--arch", "rgcn-rldae", "--ae0", "6,3,6", "--ae0_act", "sigmoid",
             "--lambda", "0.4", "--seed", "9", "--out", robust}) == 0);
  CHECK(read_kv(robust + ".metrics").at("ok") == "1");
}

TEST_CASE("graphs build from both point clouds and pixel grids") {
  const fs::path dir = scratch("build_graph");
  const std::string pts = (dir / "pts.dmat").string();
  Rng rng(3);
  save_matrix(pts, rng.normal_matrix(12, 2));
  const std::string cloud = (dir / "cloud").string();
  REQUIRE(run({"build-graph", "--points", pts, "--k", "3", "--out", cloud}) == 0);
  const SparseGraph g = load_edge_list(cloud + ".edges");
  CHECK(g.vertex_count() == 12);
  CHECK(!g.edges().empty());
  CHECK(read_kv(cloud + ".manifest").at("vertices") == "12");

  const std::string grid = (dir / "grid").string();
  REQUIRE(run({"build-graph", "--grid_h", "4", "--grid_w", "5", "--k", "4", "--out", grid}) == 0);
  CHECK(load_edge_list(grid + ".edges").vertex_count() == 20);
}

TEST_CASE("synthetic classification output splits and reloads cleanly") {
  const TrainedRun& t = trained_run();
  const Mat train_x = load_matrix(t.train_x);
  const Mat test_x = load_matrix(t.test_x);
  CHECK(train_x.rows() == 64);  // floor(0.8 * 80)
  CHECK(test_x.rows() == 16);
  CHECK(train_x.cols() == 24);
  CHECK(test_x.cols() == 24);

  const LabelSet train_y = load_labels(t.train_labels);
  const LabelSet test_y = load_labels(t.test_labels);
  CHECK(train_y.size() == 64);
  CHECK(test_y.size() == 16);
  for (int label : train_y.labels) CHECK((label == 0 || label == 1));
  CHECK(load_edge_list(t.graph).vertex_count() == 24);
}

TEST_CASE("synthetic low-rank parts add back to the data exactly") {
  const fs::path dir = scratch("synth_lowrank");
  const std::string fix = (dir / "fix").string();
  REQUIRE(run({"synth", "--kind", "lowrank", "--rows", "14", "--cols", "9", "--rank", "2",
               "--seed", "6", "--out", fix}) == 0);
  const Mat x = load_matrix(fix + ".x.dmat");
  const Mat l0 = load_matrix(fix + ".l0.dmat");
  const Mat e0 = load_matrix(fix + ".e0.dmat");
  CHECK((x - l0 - e0).norm() == 0.0);
  CHECK(read_kv(fix + ".manifest").at("spikes") == std::to_string((e0.array() != 0.0).count()));
}

TEST_CASE("the eval command reports the library's accuracy") {
  const TrainedRun& t = trained_run();
  const std::string out = (t.dir / "eval").string();
  REQUIRE(run({"eval", "--checkpoint", t.run + ".r0.ckpt", "--x", t.test_x, "--graph",
               t.graph, "--labels", t.test_labels, "--out", out}) == 0);
  const auto metrics = read_kv(out + ".metrics");

  const std::vector<SparseGraph> graphs{load_edge_list(t.graph)};
  const Model model = load_checkpoint(t.run + ".r0.ckpt", graphs);
  const LabelSet labels = load_labels(t.test_labels, model.n_classes);
  const double expected = evaluate(model, {load_matrix(t.test_x)}, labels);
  CHECK(std::stod(metrics.at("accuracy")) == expected);
  CHECK(metrics.at("samples") == "16");
  CHECK(metrics.at("labeled") == "16");
}

TEST_CASE("malformed invocations produce usage failures") {
  const fs::path dir = scratch("usage_errors");
  const std::string in = (dir / "x.dmat").string();
  save_matrix(in, Mat::Zero(3, 3));

  CHECK(run({}) == 2);
  CHECK(run({"transmogrify"}) == 2);
  CHECK(run({"corrupt", "--input", in, "--out", (dir / "a").string()}) == 2);  // no level
  CHECK(run({"corrupt", "--input", in, "--level"}) == 2);  // flag without value
  CHECK(run({"corrupt", "one.config", "two.config"}) == 2);
  CHECK(run({"corrupt", "--input", (dir / "missing.dmat").string(), "--level", "0.1",
             "--out", (dir / "b").string()}) == 2);
  CHECK(run({"synth", "--kind", "hexagons", "--out", (dir / "c").string()}) == 2);
  CHECK(run({"train", "--x", in, "--graph", in, "--labels", in, "--test_labels", in,
             "--out", (dir / "d").string()}) == 2);  // test_labels without test_x
  CHECK(run({"gradcheck", "--vertices", "1", "--out", (dir / "e").string()}) == 2);
}

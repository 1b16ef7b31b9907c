#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "apn/config.hpp"
#include "apn/error.hpp"
#include "apn/labels_dump.hpp"
#include "doctest.h"
#include "support/scratch.hpp"
#include "support/oracles.hpp"

using namespace apn;
namespace fs = std::filesystem;

namespace {

const fs::path kTool = APNTRACK_PATH;
const fs::path kGolden = fs::path(GOLDEN_DIR) / "labels_96x96_s4_12x12_g30_30_60_60.csv";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = testing::scratch_path("cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Runs the CLI with stdout/stderr redirected; returns the exit status.
int run(const std::string& args, const fs::path& out = "/dev/null") {
  const std::string cmd = kTool.string() + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// A tiny model and a two-epoch schedule keep CLI round trips fast.
const char* kTinyConfig = R"({
  // tiny network, a few steps
  "seed": 3,
  "model": {
    "blocks": [
      {"channels": 8, "kernel": 3, "stride": 2, "padding": 0},
      {"channels": 8, "kernel": 3, "stride": 2, "padding": 0},
      {"channels": 8, "kernel": 3, "stride": 1, "padding": 1},
      {"channels": 8, "kernel": 3, "stride": 1, "padding": 1},
      {"channels": 8, "kernel": 3, "stride": 1, "padding": 1}
    ],
    "template_size": 32,
    "search_size": 48,
    "anchor_init": 8.0
  },
  "schedule": {"total_epochs": 2, "freeze_epochs": 1, "steps_per_epoch": 2, "batch_size": 2},
  "data": {"train_pairs": 4}
})";

}  // namespace

TEST_CASE("config: defaults and presets") {
  const RunConfig empty = parse_config("");
  CHECK(empty.preset == "toy");
  CHECK(empty.loss.cls1 == 1.2);
  CHECK(empty.loss.cls2 == 1.0);
  CHECK(empty.schedule.momentum == 0.9);
  CHECK(empty.schedule.total_epochs == 20);
  CHECK(empty.model == ModelConfig::toy());
  CHECK(parse_config("{}").loss.cls1 == 1.2);

  const RunConfig paper = parse_config("", std::string("paper"));
  CHECK(paper.model.template_size == 127);
  CHECK(paper.model.search_size == 287);
  CHECK(paper.data.pairs.template_size == 127);
  CHECK(paper.data.pairs.search_size == 287);
  CHECK(paper.schedule.total_epochs == 50);
  CHECK(paper.schedule.freeze_epochs == 10);
  CHECK(paper.schedule.batch_size == 124);
  CHECK(paper.schedule.lr_start == 0.005);
  CHECK(paper.schedule.lr_end == 0.0005);
  CHECK(parse_config(R"({"preset": "paper"})").model.search_size == 287);
  CHECK_THROWS_AS(parse_config("", std::string("huge")), ConfigError);
}

TEST_CASE("config: errors name the key") {
  CHECK(error_of(R"({"schedule": {"freeze_epochs": 30, "total_epochs": 20}})").find("schedule.freeze_epochs") !=
        std::string::npos);
  CHECK(error_of(R"({"schedule": {"epochs": 3}})").find("schedule.epochs") != std::string::npos);
  CHECK(error_of(R"({"bogus": 1})").find("bogus") != std::string::npos);
  CHECK(error_of(R"({"loss": {"cls1": "high"}})").find("loss.cls1") != std::string::npos);
  CHECK(error_of(R"({"tracker": {"window_influence": 2}})").find("tracker.window_influence") != std::string::npos);
  CHECK(error_of(R"({"labels": {"iou_pos": 0.2, "iou_neg": 0.3}})").find("labels.") != std::string::npos);
  CHECK_FALSE(error_of("{not json").empty());
}

TEST_CASE("config: comments and the printed form round-trip") {
  const RunConfig a = parse_config(kTinyConfig);
  CHECK(a.seed == 3);
  CHECK(a.schedule.seed == 3);
  CHECK(a.model.template_size == 32);
  CHECK(a.data.pairs.search_size == 48);
  CHECK(a.model.anchor_init == 8.0);
  CHECK(a.model.anchor_scale == 4.0);

  for (const RunConfig& cfg : {a, parse_config(""), parse_config("", std::string("paper"))}) {
    const std::string text = cfg.to_commented_json();
    const RunConfig back = parse_config(text);
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.to_commented_json() == text);
  }
  const std::string printed = parse_config("").to_commented_json();
  CHECK(printed.find("\"cls1\": 1.2,  // published") != std::string::npos);
  const std::string paper = parse_config("", std::string("paper")).to_commented_json();
  CHECK(paper.find("127") != std::string::npos);
  CHECK(paper.find("287") != std::string::npos);
}

TEST_CASE("labels table: golden file") {
  const GridGeometry geom{96, 96, 4, 12, 12};
  const std::string table = labels_table(geom, CornerBox{30, 30, 60, 60}, 2.0);
  REQUIRE(fs::exists(kGolden));
  CHECK(table == slurp(kGolden));

  // Every row of the frozen file agrees with the brute-force oracle.
  const auto want = testing::oracle_labels({96, 96, 4, 12, 12}, {30, 30, 60, 60}, 2.0);
  std::istringstream is(slurp(kGolden));
  std::string line;
  std::getline(is, line);
  CHECK(line == "i,j,p_i,p_j,x0,x1,x2,x3,W,cls2,cls3");
  std::size_t k = 0;
  while (std::getline(is, line)) {
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stod(tok));
    REQUIRE(v.size() == 11);
    REQUIRE(k < want.px.size());
    CHECK(v[0] == static_cast<double>(k % 12));
    CHECK(v[1] == static_cast<double>(k / 12));
    CHECK(v[2] == doctest::Approx(want.px[k]).epsilon(1e-9));
    CHECK(v[3] == doctest::Approx(want.py[k]).epsilon(1e-9));
    for (int c = 0; c < 4; ++c) CHECK(std::abs(v[4 + c] - want.dist[k][c]) <= 5e-7);
    CHECK(v[8] == want.mask[k]);
    CHECK(v[9] == want.inside[k]);
    CHECK(std::abs(v[10] - want.centerness[k]) <= 5e-7);
    ++k;
  }
  CHECK(k == 144);
}

TEST_CASE("labels table: whole patch and degenerate boxes") {
  const GridGeometry geom{96, 96, 4, 12, 12};
  const std::string all = labels_table(geom, CornerBox{-1, -1, 97, 97}, 2.0);
  std::istringstream is(all);
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    CHECK(f.at(9) == "1");
    ++rows;
  }
  CHECK(rows == 144);
  CHECK_THROWS_AS(labels_table(geom, CornerBox{30, 30, 30, 60}, 2.0), LabelError);
  CHECK_THROWS_AS(labels_table(GridGeometry{10, 10, 4, 12, 12}, CornerBox{3, 3, 6, 6}, 2.0), ConfigError);
}

TEST_CASE("cli: exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run("--version", dir / "v.txt") == 0);
  CHECK(slurp(dir / "v.txt").find("apntrack") != std::string::npos);
  CHECK(run("--help") == 0);
  CHECK(run("--print-config") == 0);
  CHECK(run("--no-such-flag") == 2);
  CHECK(run("--preset huge --print-config") == 2);

  std::ofstream(dir / "bad.json") << R"({"schedule": {"freeze_epochs": 30, "total_epochs": 20}})";
  CHECK(run("--config " + (dir / "bad.json").string() + " --print-config", dir / "err.txt") == 2);
  CHECK(slurp(dir / "err.txt").find("schedule.freeze_epochs") != std::string::npos);
  CHECK(run("--config " + (dir / "missing.json").string() + " --print-config") == 2);

  CHECK(run("labels-check --geom 96,96,4,12,12 --box 30,30,30,60") == 2);
  CHECK(run("labels-check --geom 96,96,4,12 --box 30,30,60,60") == 2);
  CHECK(run("track --checkpoint " + (dir / "none.bin").string() + " --sequence " + dir.string() +
            " --init 1,1,5,5 --out " + (dir / "r.txt").string()) == 1);
  CHECK(run("eval --results " + (dir / "nothing").string() + " --annotations " + dir.string() + " --out " +
            (dir / "rep").string()) == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: labels-check matches the golden file") {
  const fs::path dir = scratch("labels");
  CHECK(run("labels-check --geom 96,96,4,12,12 --box 30,30,60,60 --out " + (dir / "a.csv").string()) == 0);
  CHECK(run("labels-check --geom 96,96,4,12,12 --box 30,30,60,60", dir / "b.csv") == 0);
  CHECK(slurp(dir / "a.csv") == slurp(kGolden));
  CHECK(slurp(dir / "b.csv") == slurp(kGolden));
  fs::remove_all(dir);
}

TEST_CASE("cli: print-config feeds back unchanged") {
  const fs::path dir = scratch("print");
  for (const char* preset : {"toy", "paper"}) {
    CAPTURE(preset);
    CHECK(run(std::string("--preset ") + preset + " --seed 9 --print-config", dir / "a.json") == 0);
    CHECK(run("--config " + (dir / "a.json").string() + " --print-config", dir / "b.json") == 0);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(parse_config(slurp(dir / "a.json")).seed == 9);
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: train, synth, track and eval end to end") {
  const fs::path dir = scratch("pipeline");
  std::ofstream(dir / "tiny.json") << kTinyConfig;
  const std::string cfg = "--config " + (dir / "tiny.json").string();

  REQUIRE(run(cfg + " train --out " + (dir / "t1").string()) == 0);
  REQUIRE(run(cfg + " train --out " + (dir / "t2").string()) == 0);
  CHECK(slurp(dir / "t1" / "loss_history.csv") == slurp(dir / "t2" / "loss_history.csv"));
  CHECK(slurp(dir / "t1" / "checkpoint.bin") == slurp(dir / "t2" / "checkpoint.bin"));
  CHECK(run(cfg + " --seed 4 train --out " + (dir / "t3").string()) == 0);
  CHECK(slurp(dir / "t1" / "loss_history.csv") != slurp(dir / "t3" / "loss_history.csv"));
  // The saved config reproduces the run.
  CHECK(run("--config " + (dir / "t1" / "config.json").string() + " train --out " + (dir / "t4").string()) == 0);
  CHECK(slurp(dir / "t1" / "loss_history.csv") == slurp(dir / "t4" / "loss_history.csv"));

  REQUIRE(run("--seed 12 synth --out " + (dir / "data").string() + " --name seqA --frames 8", dir / "synth.txt") == 0);
  const std::string synth = slurp(dir / "synth.txt");
  const auto at = synth.find("init: ");
  REQUIRE(at != std::string::npos);
  const std::string init = synth.substr(at + 6, synth.find('\n', at) - at - 6);
  CHECK(fs::exists(dir / "data" / "seqA" / "0001.ppm"));
  CHECK(fs::exists(dir / "data" / "annotations" / "seqA.txt"));

  const std::string track = cfg + " track --checkpoint " + (dir / "t1" / "checkpoint.bin").string() + " --sequence " +
                            (dir / "data" / "seqA").string() + " --init " + init + " --out ";
  REQUIRE(run(track + (dir / "res" / "seqA.txt").string(), dir / "track.txt") == 0);
  REQUIRE(run(track + (dir / "res2" / "seqA.txt").string()) == 0);
  CHECK(slurp(dir / "track.txt").find("fps: ") != std::string::npos);
  CHECK(slurp(dir / "res" / "seqA.txt") == slurp(dir / "res2" / "seqA.txt"));
  CHECK(fs::exists(dir / "res" / "seqA.timing.json"));
  std::istringstream lines(slurp(dir / "res" / "seqA.txt"));
  int n = 0;
  for (std::string l; std::getline(lines, l);) ++n;
  CHECK(n == 8);

  REQUIRE(run(cfg + " eval --results " + (dir / "res").string() + " --annotations " +
                  (dir / "data" / "annotations").string() + " --out " + (dir / "report").string(),
              dir / "eval.txt") == 0);
  CHECK(fs::exists(dir / "report" / "overall.csv"));
  CHECK(fs::exists(dir / "report" / "success.svg"));
  CHECK(fs::exists(dir / "report" / "precision.svg"));
  CHECK(slurp(dir / "eval.txt").find("AUC: ") != std::string::npos);

  CHECK(run(cfg + " track --checkpoint " + (dir / "t1" / "checkpoint.bin").string() + " --sequence " +
            (dir / "data" / "seqA").string() + " --init 10,10,0,5 --out " + (dir / "x.txt").string()) == 2);
  fs::remove_all(dir);
}

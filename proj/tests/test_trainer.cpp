#include <cmath>
#include <filesystem>
#include <fstream>

#include "apn/error.hpp"
#include "apn/synthetic.hpp"
#include "apn/trainer.hpp"
#include "doctest.h"
#include "support/scratch.hpp"

using namespace apn;
namespace fs = std::filesystem;

namespace {

std::vector<TrainingPair> tiny_pairs(std::size_t n, std::uint64_t seed) {
  PairOptions po;
  po.template_size = 32;
  po.search_size = 48;
  return make_pair_set(n, po, seed, 2);
}

TrainSchedule short_schedule() {
  TrainSchedule s;
  s.total_epochs = 3;
  s.freeze_epochs = 2;
  s.steps_per_epoch = 3;
  s.batch_size = 2;
  s.seed = 11;
  return s;
}

std::vector<Tensor> snapshot(const Network& net) {
  std::vector<Tensor> out;
  for (const auto& p : net.parameters()) out.push_back(p.var.value());
  return out;
}

bool same_values(const Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

fs::path scratch(const std::string& name) {
  const fs::path p = testing::scratch_path("test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("schedule: log-space learning rate") {
  const TrainSchedule paper = TrainSchedule::paper();
  CHECK(paper.total_epochs == 50);
  CHECK(paper.freeze_epochs == 10);
  CHECK(paper.batch_size == 124);
  CHECK(std::abs(paper.lr_at(0) - 0.005) <= 1e-12);
  CHECK(std::abs(paper.lr_at(paper.total_epochs - 1) - 0.0005) <= 1e-12);
  for (int e = 1; e < paper.total_epochs; ++e) {
    CHECK(paper.lr_at(e) < paper.lr_at(e - 1));
    // ln lr is affine in e: constant step.
    const double step = std::log(paper.lr_at(e)) - std::log(paper.lr_at(e - 1));
    CHECK(step == doctest::Approx(std::log(0.1) / 49).epsilon(1e-9));
  }
  const TrainSchedule toy = TrainSchedule::toy();
  CHECK(toy.total_epochs == 20);
  CHECK(toy.freeze_epochs == 4);
  CHECK(toy.batch_size == 8);
  CHECK(toy.lr_at(0) == toy.lr_start);
  CHECK(std::abs(toy.lr_at(19) - toy.lr_end) <= 1e-12);
}

TEST_CASE("schedule: validation") {
  TrainSchedule s;
  s.freeze_epochs = 30;
  s.total_epochs = 20;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.lr_end = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_NOTHROW(TrainSchedule::paper().validate());
}

TEST_CASE("pairs: determinism and geometry") {
  const auto a = tiny_pairs(3, 4), b = tiny_pairs(3, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].search_patch.rgb == b[i].search_patch.rgb);
    CHECK(a[i].template_patch.rgb == b[i].template_patch.rgb);
    CHECK(a[i].search_box.x1 == b[i].search_box.x1);
  }
  SyntheticScene scene = SyntheticScene::random(5);
  PairOptions po;
  po.max_shift = 0.0;
  po.scale_jitter = 0.0;
  const TrainingPair p = generate_pair(scene, 3, 0, po, 8);
  const CenterBox c = p.search_box.to_center();
  CHECK(c.cx == doctest::Approx(po.search_size / 2.0).epsilon(1e-9));
  CHECK(c.cy == doctest::Approx(po.search_size / 2.0).epsilon(1e-9));
  CHECK(context_side(40, 20, 0.5) == doctest::Approx(std::sqrt(70.0 * 50.0)).epsilon(1e-15));
  CHECK(context_side(40, 20, 0.5) == doctest::Approx(59.16).epsilon(1e-4));
}

TEST_CASE("occluder covers at least the configured fraction") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticScene scene = SyntheticScene::random(seed);
    scene.occluder_fraction = 0.5;
    scene.occlusion_start = 0;
    scene.occlusion_end = 10;
    const RenderedFrame f = render_frame(scene, 2);
    std::size_t object = 0, covered = 0;
    for (std::size_t k = 0; k < f.object_mask.size(); ++k) {
      object += f.object_mask[k];
      covered += f.object_mask[k] && f.occluder_mask[k];
    }
    REQUIRE(object > 0);
    CHECK(static_cast<double>(covered) >= 0.5 * static_cast<double>(object));
    const RenderedFrame later = render_frame(scene, 10);
    std::size_t after = 0;
    for (auto v : later.occluder_mask) after += v;
    CHECK(after == 0);
  }
}

TEST_CASE("train: freeze phase leaves the backbone untouched") {
  Network net(ModelConfig::tiny(), 3);
  const auto before = snapshot(net);
  const auto params = net.parameters();
  std::vector<Tensor> at_freeze_end;
  TrainOptions opts;
  opts.on_epoch_end = [&](int epoch, const Network& n) {
    if (epoch == 1) at_freeze_end = snapshot(n);
  };
  const auto pairs = tiny_pairs(4, 3);
  train(net, short_schedule(), pairs, opts);
  REQUIRE(at_freeze_end.size() == before.size());
  const auto after = snapshot(net);
  for (std::size_t i = 0; i < params.size(); ++i) {
    CAPTURE(params[i].name);
    if (params[i].group == "backbone") {
      CHECK(same_values(before[i], at_freeze_end[i]));
      CHECK_FALSE(same_values(at_freeze_end[i], after[i]));
    } else {
      CHECK_FALSE(same_values(before[i], at_freeze_end[i]));
    }
  }
}

TEST_CASE("train: identical seeds give identical histories") {
  const auto pairs = tiny_pairs(4, 5);
  auto run = [&] {
    Network net(ModelConfig::tiny(), 5);
    return train(net, short_schedule(), pairs, TrainOptions{}).history;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == 9);
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].total == b[i].total);
    CHECK(a[i].apn == b[i].apn);
    CHECK(a[i].loc_l1 == b[i].loc_l1);
    CHECK(a[i].lr == b[i].lr);
  }
  CHECK(a.front().lr == short_schedule().lr_start);
  CHECK(a.back().lr == doctest::Approx(short_schedule().lr_end).epsilon(1e-12));
}

TEST_CASE("train: outputs on disk") {
  const fs::path dir = scratch("train_out");
  Network net(ModelConfig::tiny(), 6);
  TrainSchedule s = short_schedule();
  s.checkpoint_every = 1;
  TrainOptions opts;
  opts.out_dir = dir;
  const auto result = train(net, s, tiny_pairs(4, 6), opts);
  REQUIRE(result.checkpoint);
  CHECK(fs::exists(*result.checkpoint));
  CHECK(fs::exists(dir / "checkpoint_epoch1.bin"));
  CHECK(fs::exists(dir / "checkpoint_epoch3.bin"));
  std::ifstream is(dir / "loss_history.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("step,", 0) == 0);
  CHECK(header.find("total") != std::string::npos);
  CHECK(header.find(",lr") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 9);
  fs::remove_all(dir);
}

TEST_CASE("train: a non-finite loss halts with a diagnostic dump") {
  const fs::path dir = scratch("train_nan");
  Network net(ModelConfig::tiny(), 7);
  net.layer("heads.cls3").bias.mutable_value().data()[0] = NAN;
  TrainOptions opts;
  opts.out_dir = dir;
  CHECK_THROWS_AS(train(net, short_schedule(), tiny_pairs(4, 7), opts), NumericError);
  CHECK(fs::exists(dir / "failure_checkpoint.bin"));
  CHECK(fs::exists(dir / "failure_batch.json"));
  fs::remove_all(dir);
}

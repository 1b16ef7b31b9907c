#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "apn/error.hpp"
#include "apn/eval.hpp"
#include "doctest.h"
#include "support/scratch.hpp"
#include "support/suites.hpp"

using namespace apn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

SequenceRecord record(const std::string& name, std::vector<std::string> attrs, int frames) {
  SequenceRecord r{name, {}, std::move(attrs)};
  for (int f = 0; f < frames; ++f) r.gt.push_back(CornerBox{10.0 + f, 20, 40.0 + f, 60});
  return r;
}

SequenceResult perfect(const SequenceRecord& rec, std::optional<double> fps = std::nullopt) {
  SequenceResult r{rec.name, {}, fps};
  for (const auto& g : rec.gt) r.boxes.push_back(g ? *g : CornerBox{0, 0, 1, 1});
  return r;
}

SequenceResult lost(const SequenceRecord& rec) {
  SequenceResult r{rec.name, {}, std::nullopt};
  for (std::size_t f = 0; f < rec.gt.size(); ++f) r.boxes.push_back(CornerBox{500, 500, 510, 510});
  return r;
}

}  // namespace

TEST_CASE("center location error") {
  const CornerBox a{0, 0, 2, 2};
  CHECK(cle(a, a) == 0.0);
  CHECK(cle(CornerBox{-1, -1, 1, 1}, CornerBox{2, 3, 4, 5}) == 5.0);
  CHECK(cle(CornerBox{3, 1, 9, 4}, CornerBox{-2, 7, 0, 8}) == cle(CornerBox{-2, 7, 0, 8}, CornerBox{3, 1, 9, 4}));
}

TEST_CASE("metric oracle: fixtures against threshold counting") {
  const auto r = testing::run_metric_suite();
  for (const auto& f : r.failures) MESSAGE(f);
  CHECK(r.checks > 1000);
  CHECK(r.ok());
  CHECK_THROWS_AS(success_curve(std::vector<double>{}), UsageError);
  CHECK_THROWS_AS(precision_at_rank(precision_curve(std::vector<double>{1.0}), 20.5), UsageError);
}

TEST_CASE("curves are monotone and bounded") {
  const Curve s = success_curve(std::vector<double>{0.1, 0.5, 0.52, 0.9, 1.0});
  const Curve p = precision_curve(std::vector<double>{0.0, 3.0, 19.9, 20.0, 44.0});
  for (std::size_t k = 1; k < s.values.size(); ++k) CHECK(s.values[k] <= s.values[k - 1]);
  for (std::size_t k = 1; k < p.values.size(); ++k) CHECK(p.values[k] >= p.values[k - 1]);
  CHECK(s.thresholds.back() == 1.0);
  CHECK(p.thresholds.back() == 50.0);
  // Ties at exact thresholds: IoU > t and CLE < t.
  CHECK(s.values[25] == 0.6);
  CHECK(precision_at_rank(p) == 0.6);
}

TEST_CASE("perfect tracking scores 1 in every slice") {
  const std::vector<SequenceRecord> recs{record("a", {"fast-motion", "low-resolution"}, 12),
                                         record("b", {"partial-occlusion"}, 7), record("c", {"none"}, 5)};
  std::vector<SequenceResult> res;
  for (const auto& r : recs) res.push_back(perfect(r, 100.0));
  const EvalReport rep = evaluate(res, recs);
  CHECK(rep.overall.auc == 1.0);
  CHECK(rep.overall.precision20 == 1.0);
  REQUIRE(rep.overall.fps);
  CHECK(*rep.overall.fps == 100.0);
  for (const auto& [name, slice] : rep.attributes) {
    CAPTURE(name);
    CHECK(slice.auc == 1.0);
    CHECK(slice.precision20 == 1.0);
  }
}

TEST_CASE("per-sequence averaging") {
  const std::vector<SequenceRecord> recs{record("good", {"none"}, 40), record("bad", {"none"}, 3)};
  const std::vector<SequenceResult> res{perfect(recs[0]), lost(recs[1])};
  const EvalReport rep = evaluate(res, recs);
  CHECK(rep.sequences[0].auc == 1.0);
  CHECK(rep.sequences[1].auc == 0.0);
  CHECK(rep.overall.auc == 0.5);
  CHECK(rep.overall.precision20 == 0.5);
  CHECK(rep.attributes.empty());
}

TEST_CASE("attribute slices partition the sequences") {
  const std::vector<SequenceRecord> recs{
      record("s1", {"fast-motion", "low-resolution", "full-occlusion"}, 4), record("s2", {"fast-motion"}, 4),
      record("s3", {"none"}, 4), record("s4", {"partial-occlusion", "low-resolution"}, 4)};
  std::vector<SequenceResult> res;
  for (const auto& r : recs) res.push_back(perfect(r));
  const EvalReport rep = evaluate(res, recs);
  CHECK(rep.overall.members.size() == 4);
  for (const auto& rec : recs) {
    std::size_t appearances = 0;
    for (const auto& [name, slice] : rep.attributes) {
      appearances += std::count(slice.members.begin(), slice.members.end(), rec.name);
    }
    const std::size_t tagged = rec.attributes == std::vector<std::string>{"none"} ? 0 : rec.attributes.size();
    CHECK(appearances == tagged);
  }
  CHECK(rep.attributes.at("fast-motion").members.size() == 2);
  CHECK(rep.attributes.at("low-resolution").members.size() == 2);
}

TEST_CASE("absent ground truth is excluded") {
  SequenceRecord rec = record("occ", {"full-occlusion"}, 6);
  rec.gt[2] = std::nullopt;
  rec.gt[3] = std::nullopt;
  SequenceResult res = perfect(rec);
  res.boxes[2] = CornerBox{900, 900, 901, 901};
  const SequenceMetrics m = evaluate_sequence(res, rec);
  CHECK(m.frames_scored == 4);
  CHECK(m.auc == 1.0);

  SequenceRecord empty = record("void", {}, 2);
  empty.gt = {std::nullopt, std::nullopt};
  CHECK_THROWS_AS(evaluate_sequence(perfect(empty), empty), DataError);
  SequenceResult short_res = perfect(rec);
  short_res.boxes.pop_back();
  CHECK_THROWS_AS(evaluate_sequence(short_res, rec), DataError);
  CHECK_THROWS_AS(evaluate(std::vector<SequenceResult>{}, std::vector<SequenceRecord>{rec}), DataError);
}

TEST_CASE("files: annotations, results, report") {
  const fs::path root = testing::scratch_path("test_eval");
  fs::remove_all(root);
  fs::create_directories(root / "ann");
  fs::create_directories(root / "res");
  std::ofstream(root / "ann" / "alpha.txt") << "10,20,30,40\nNaN,NaN,NaN,NaN\n12,20,30,40\n";
  std::ofstream(root / "ann" / "alpha.json") << R"({"attributes": ["full-occlusion", "fast-motion"]})";
  std::ofstream(root / "ann" / "beta.txt") << "5,5,10,10\n6,5,10,10\n";

  const auto recs = load_annotations(root / "ann");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].name == "alpha");
  CHECK(recs[0].gt.size() == 3);
  CHECK_FALSE(recs[0].gt[1].has_value());
  CHECK(recs[0].gt[2]->x2 == 42.0);
  CHECK(recs[0].attributes.size() == 2);
  CHECK(recs[1].attributes.empty());

  write_box_file(root / "res" / "alpha.txt",
                 std::vector<CornerBox>{*recs[0].gt[0], CornerBox{0, 0, 5, 5}, *recs[0].gt[2]});
  write_box_file(root / "res" / "beta.txt", std::vector<CornerBox>{*recs[1].gt[0], CornerBox{8, 5, 18, 15}});
  write_timing(root / "res" / "alpha.timing.json", 123.5, std::vector<double>{0.01, 0.02});
  const auto res = load_results(root / "res");
  REQUIRE(res.size() == 2);
  REQUIRE(res[0].fps);
  CHECK(*res[0].fps == 123.5);
  CHECK_FALSE(res[1].fps);

  const EvalReport rep = evaluate(res, recs);
  write_report(root / "r1", rep);
  write_report(root / "r2", rep);
  for (const char* f : {"overall.csv", "attr_fast-motion.csv", "attr_full-occlusion.csv", "success.svg",
                        "precision.svg"}) {
    CAPTURE(f);
    CHECK(fs::exists(root / "r1" / f));
    CHECK(slurp(root / "r1" / f) == slurp(root / "r2" / f));
  }
  const std::string overall = slurp(root / "r1" / "overall.csv");
  CHECK(overall.rfind("section,name,key,value\n", 0) == 0);
  CHECK(overall.find("summary,overall,auc,") != std::string::npos);
  CHECK(overall.find("sequence,beta,fps,nan") != std::string::npos);

  std::ofstream(root / "ann" / "beta.json") << R"({"attributes": ["camera-shake"]})";
  CHECK_THROWS_AS(load_annotations(root / "ann"), DataError);
  std::ofstream(root / "ann" / "beta.txt") << "5,5,10\n";
  CHECK_THROWS_AS(read_box_file(root / "ann" / "beta.txt"), DataError);
  fs::remove_all(root);
}

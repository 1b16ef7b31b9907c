// apntrack: train, track, evaluate and inspect labels from one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
// arguments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "apn/config.hpp"
#include "apn/error.hpp"
#include "apn/eval.hpp"
#include "apn/kernels.hpp"
#include "apn/labels_dump.hpp"
#include "apn/synthetic.hpp"
#include "apn/tracker.hpp"
#include "apn/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw apn::ConfigError(what + ": bad number '" + tok + "'");
    }
  }
  if (out.size() != expected) {
    throw apn::ConfigError(what + ": expected " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

struct Globals {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
};

apn::RunConfig resolve(const Globals& g) {
  std::optional<fs::path> path;
  if (g.config) path = *g.config;
  apn::RunConfig cfg = apn::load_config(path, g.preset);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.schedule.seed = *g.seed;
  }
  return cfg;
}

int cmd_train(const Globals& g, const std::string& out_dir) {
  const apn::RunConfig cfg = resolve(g);
  const auto pairs = apn::make_pair_set(static_cast<std::size_t>(cfg.data.train_pairs), cfg.data.pairs, cfg.seed,
                                        cfg.data.max_gap);
  apn::Network net(cfg.model, cfg.seed);
  std::printf("model: %zu parameters, %dx%d response map, kernels: %s\n", net.parameter_count(), net.grid().w,
              net.grid().h, apn::kernels::active().name);
  apn::TrainOptions opts;
  opts.labels = cfg.labels;
  opts.weights = cfg.loss;
  opts.out_dir = out_dir;
  opts.on_epoch_end = nullptr;
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "config.json") << cfg.to_commented_json();
  const auto result = apn::train(net, cfg.schedule, pairs, opts);
  const auto& h = result.history;
  std::printf("steps: %zu, loss %.6f -> %.6f\n", h.size(), h.front().total, h.back().total);
  std::printf("checkpoint: %s\n", result.checkpoint->string().c_str());
  return 0;
}

int cmd_track(const Globals& g, const std::string& checkpoint, const std::string& sequence, const std::string& init,
              const std::string& out) {
  const apn::RunConfig cfg = resolve(g);
  const auto v = parse_numbers(init, 4, "--init");
  if (!(v[2] > 0.0 && v[3] > 0.0)) throw apn::ConfigError("--init: width and height must be positive");
  const apn::CornerBox box{v[0], v[1], v[0] + v[2], v[1] + v[3]};
  const apn::Network net = apn::Network::from_checkpoint(apn::read_checkpoint(checkpoint));
  const apn::PpmDirectory frames(sequence);
  if (frames.size() == 0) throw apn::DataError("no .ppm frames in " + sequence);
  const auto run = apn::run_sequence(net, frames, box, cfg.tracker);
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  apn::write_box_file(out_path, run.boxes);
  const fs::path timing = out_path.parent_path() / (out_path.stem().string() + ".timing.json");
  apn::write_timing(timing, run.fps, run.frame_seconds);
  std::printf("frames: %zu\nfps: %.2f\nresults: %s\n", run.boxes.size(), run.fps, out_path.string().c_str());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& results, const std::string& annotations, const std::string& out) {
  const apn::RunConfig cfg = resolve(g);
  const auto records = apn::load_annotations(annotations);
  const auto res = apn::load_results(results);
  const auto report = apn::evaluate(res, records, cfg.eval.precision_rank_px);
  apn::write_report(out, report);
  std::printf("sequences: %zu\nAUC: %.4f\nprecision@%g: %.4f\n", report.sequences.size(), report.overall.auc,
              cfg.eval.precision_rank_px, report.overall.precision20);
  if (report.overall.fps) std::printf("fps: %.2f\n", *report.overall.fps);
  for (const auto& [name, slice] : report.attributes) {
    std::printf("  %-18s n=%zu AUC %.4f P %.4f\n", name.c_str(), slice.members.size(), slice.auc, slice.precision20);
  }
  return 0;
}

int cmd_labels(const std::string& geom, const std::string& box, double area_ratio, const std::string& out) {
  const auto gv = parse_numbers(geom, 5, "--geom");
  const auto bv = parse_numbers(box, 4, "--box");
  apn::GridGeometry geo{gv[0], gv[1], gv[2], static_cast<int>(gv[3]), static_cast<int>(gv[4])};
  if (gv[3] != geo.w || gv[4] != geo.h) throw apn::ConfigError("--geom: map size must be integral");
  const std::string table = apn::labels_table(geo, {bv[0], bv[1], bv[2], bv[3]}, area_ratio);
  if (out.empty() || out == "-") {
    std::cout << table;
  } else {
    std::ofstream os(out, std::ios::binary | std::ios::trunc);
    if (!os) throw apn::DataError("cannot write " + out);
    os << table;
  }
  return 0;
}

struct SynthArgs {
  std::string out;
  std::string name = "seq";
  int frames = 50;
  std::string motion = "constant-velocity";
  double speed = 1.5;
  double occlusion = 0.0;
  int occlusion_start = 0;
  int occlusion_end = 0;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  const apn::RunConfig cfg = resolve(g);
  if (a.frames < 1) throw apn::ConfigError("--frames: must be >= 1");
  apn::SyntheticScene scene = apn::SyntheticScene::random(cfg.seed);
  scene.jitter = 0.0;
  scene.scale_drift = 0.0;
  if (a.motion == "static") {
    scene.vx = scene.vy = 0.0;
  } else if (a.motion == "constant-velocity") {
    const double norm = std::hypot(scene.vx, scene.vy);
    scene.vx = norm > 0 ? a.speed * scene.vx / norm : a.speed;
    scene.vy = norm > 0 ? a.speed * scene.vy / norm : 0.0;
  } else {
    throw apn::ConfigError("--motion: expected static or constant-velocity");
  }
  if (a.occlusion < 0.0 || a.occlusion > 1.0) throw apn::ConfigError("--occlusion: must lie in [0, 1]");
  scene.occluder_fraction = a.occlusion;
  scene.occlusion_start = a.occlusion_start;
  scene.occlusion_end = a.occlusion_end > 0 ? a.occlusion_end : a.frames;

  const fs::path seq_dir = fs::path(a.out) / a.name;
  const fs::path ann_dir = fs::path(a.out) / "annotations";
  fs::create_directories(seq_dir);
  fs::create_directories(ann_dir);
  std::vector<apn::CornerBox> boxes;
  for (int t = 0; t < a.frames; ++t) {
    const auto f = apn::render_frame(scene, t);
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.ppm", t + 1);
    apn::write_ppm(seq_dir / name, f.image);
    boxes.push_back(f.box);
  }
  apn::write_box_file(ann_dir / (a.name + ".txt"), boxes);
  nlohmann::json attrs = nlohmann::json::array();
  if (a.occlusion >= 1.0) {
    attrs.push_back("full-occlusion");
  } else if (a.occlusion > 0.0) {
    attrs.push_back("partial-occlusion");
  }
  if (a.motion == "constant-velocity" && a.speed >= 8.0) attrs.push_back("fast-motion");
  if (attrs.empty()) attrs.push_back("none");
  std::ofstream(ann_dir / (a.name + ".json")) << nlohmann::json{{"attributes", attrs}}.dump(2) << "\n";
  const auto& b = boxes.front();
  std::printf("frames: %d\ninit: %.4f,%.4f,%.4f,%.4f\n", a.frames, b.x1, b.y1, b.width(), b.height());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SiamAPN-style adaptive-anchor tracker"};
  app.fallthrough();
  Globals g;
  bool print_config = false;
  app.set_version_flag("--version", std::string("apntrack ") + kVersion);
  app.add_option("--config", g.config, "JSON run configuration (comments allowed)");
  app.add_option("--preset", g.preset, "toy or paper");
  app.add_option("--seed", g.seed, "seed for data generation and initialization");
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");

  std::string out, checkpoint, sequence, init, results, annotations, geom, box;
  double area_ratio = 2.0;

  auto* train = app.add_subcommand("train", "train on synthetic pairs");
  train->add_option("--out", out, "output directory")->required();

  auto* track = app.add_subcommand("track", "track one sequence of .ppm frames");
  track->add_option("--checkpoint", checkpoint)->required();
  track->add_option("--sequence", sequence, "directory of .ppm frames")->required();
  track->add_option("--init", init, "first-frame box x,y,w,h")->required();
  track->add_option("--out", out, "results file")->required();

  auto* eval = app.add_subcommand("eval", "one-pass evaluation report");
  eval->add_option("--results", results)->required();
  eval->add_option("--annotations", annotations)->required();
  eval->add_option("--out", out, "report directory")->required();

  auto* labels = app.add_subcommand("labels-check", "dump label maps for a box and geometry");
  labels->add_option("--geom", geom, "search_w,search_h,stride,w,h")->required();
  labels->add_option("--box", box, "ground truth x1,y1,x2,y2")->required();
  labels->add_option("--area-ratio", area_ratio, "quality-mask area ratio");
  labels->add_option("--out", out, "CSV file (default stdout)");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "render a synthetic sequence with annotations");
  synth->add_option("--out", synth_args.out, "output root")->required();
  synth->add_option("--name", synth_args.name);
  synth->add_option("--frames", synth_args.frames);
  synth->add_option("--motion", synth_args.motion, "static or constant-velocity");
  synth->add_option("--speed", synth_args.speed, "pixels per frame");
  synth->add_option("--occlusion", synth_args.occlusion, "fraction of the object covered");
  synth->add_option("--occlusion-start", synth_args.occlusion_start);
  synth->add_option("--occlusion-end", synth_args.occlusion_end);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (print_config) {
      std::cout << resolve(g).to_commented_json();
      return 0;
    }
    if (*train) return cmd_train(g, out);
    if (*track) return cmd_track(g, checkpoint, sequence, init, out);
    if (*eval) return cmd_eval(g, results, annotations, out);
    if (*labels) return cmd_labels(geom, box, area_ratio, out);
    if (*synth) return cmd_synth(g, synth_args);
    std::cerr << app.help();
    return 2;
  } catch (const apn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const apn::InitError& e) {
    std::cerr << "invalid initial box: " << e.what() << "\n";
    return 2;
  } catch (const apn::LabelError& e) {
    std::cerr << "label error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

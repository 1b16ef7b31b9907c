#include "apn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "apn/error.hpp"
#include "json.hpp"

namespace apn {

TrainSchedule TrainSchedule::toy() { return TrainSchedule{}; }

TrainSchedule TrainSchedule::paper() {
  TrainSchedule s;
  s.total_epochs = 50;
  s.freeze_epochs = 10;
  s.batch_size = 124;
  s.lr_start = 0.005;
  s.lr_end = 0.0005;
  s.momentum = 0.9;
  s.max_grad_norm = 0.0;
  return s;
}

void TrainSchedule::validate() const {
  if (total_epochs < 1) throw ConfigError("schedule.total_epochs: must be >= 1");
  if (freeze_epochs < 0) throw ConfigError("schedule.freeze_epochs: must be >= 0");
  if (freeze_epochs >= total_epochs) {
    throw ConfigError("schedule.freeze_epochs: must be smaller than schedule.total_epochs (" +
                      std::to_string(freeze_epochs) + " >= " + std::to_string(total_epochs) + ")");
  }
  if (steps_per_epoch < 1) throw ConfigError("schedule.steps_per_epoch: must be >= 1");
  if (batch_size < 1) throw ConfigError("schedule.batch_size: must be >= 1");
  if (!(lr_start > 0.0)) throw ConfigError("schedule.lr_start: must be positive");
  if (!(lr_end > 0.0)) throw ConfigError("schedule.lr_end: must be positive");
  if (lr_end > lr_start) throw ConfigError("schedule.lr_end: must not exceed schedule.lr_start");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("schedule.momentum: must lie in [0, 1)");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("schedule.max_grad_norm: must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("schedule.checkpoint_every: must be >= 0");
}

double TrainSchedule::lr_at(int epoch) const {
  if (total_epochs <= 1) return lr_start;
  if (epoch >= total_epochs - 1) return lr_end;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return lr_start * std::pow(lr_end / lr_start, frac);
}

Batch make_batch(std::span<const TrainingPair> pairs, std::span<const std::size_t> indices) {
  std::vector<const Image*> z, x;
  Batch b;
  for (std::size_t i : indices) {
    z.push_back(&pairs[i].template_patch);
    x.push_back(&pairs[i].search_patch);
    b.gts.push_back(pairs[i].search_box);
  }
  b.templ = Var::constant(to_tensor(z));
  b.search = Var::constant(to_tensor(x));
  return b;
}

std::vector<LabelBundle> build_batch_labels(const Network& net, const NetworkOutputs& out,
                                            std::span<const CornerBox> gts, const LabelConfig& cfg) {
  std::vector<LabelBundle> labels;
  labels.reserve(gts.size());
  for (std::size_t n = 0; n < gts.size(); ++n) {
    labels.push_back(
        build_labels(net.grid(), gts[n], decode_anchor_map(net.grid(), out.anchors.value(), static_cast<int>(n)), cfg));
  }
  return labels;
}

LossBreakdown batch_loss(const Network& net, const Batch& batch, const LabelConfig& labels, const LossWeights& w,
                         const std::vector<LabelBundle>* fixed_labels, std::vector<LabelBundle>* labels_out) {
  const NetworkOutputs out = net.forward(batch.templ, batch.search);
  std::vector<LabelBundle> built;
  if (fixed_labels == nullptr) built = build_batch_labels(net, out, batch.gts, labels);
  const std::vector<LabelBundle>& use = fixed_labels != nullptr ? *fixed_labels : built;
  LossBreakdown loss = total_loss(out, use, w);
  if (labels_out != nullptr) *labels_out = use;
  return loss;
}

double dataset_loss(const Network& net, std::span<const TrainingPair> pairs, const LabelConfig& labels,
                    const LossWeights& w, int batch_size) {
  double acc = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(pairs, idx);
    acc += batch_loss(net, b, labels, w).scalar() * static_cast<double>(idx.size());
    seen += idx.size();
  }
  return acc / static_cast<double>(seen);
}

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,epoch,apn,cls1,cls2,cls3,cls,loc_iou,loc_l1,loc,total,lr\n";
  char line[512];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  r.epoch, r.apn, r.cls1, r.cls2, r.cls3, r.cls, r.loc_iou, r.loc_l1, r.loc, r.total, r.lr);
    os << line;
  }
}

namespace {

void dump_failure(const std::filesystem::path& dir, const Network& net, const Batch& batch,
                  std::span<const std::size_t> indices, int step, const std::string& what) {
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "failure_checkpoint.bin", net.to_checkpoint());
  nlohmann::json j;
  j["step"] = step;
  j["error"] = what;
  j["pair_indices"] = std::vector<std::size_t>(indices.begin(), indices.end());
  for (const auto& g : batch.gts) j["search_boxes"].push_back({g.x1, g.y1, g.x2, g.y2});
  std::ofstream(dir / "failure_batch.json") << j.dump(2) << "\n";
}

}  // namespace

TrainResult train(Network& net, const TrainSchedule& schedule, std::span<const TrainingPair> pairs,
                  const TrainOptions& options) {
  schedule.validate();
  if (pairs.empty()) throw UsageError("train: empty pair set");
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  std::mt19937_64 rng(schedule.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  Sgd sgd(schedule.momentum, schedule.max_grad_norm);
  auto params = net.parameters();
  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    net.set_backbone_trainable(epoch >= schedule.freeze_epochs);
    const double lr = schedule.lr_at(epoch);
    for (int s = 0; s < schedule.steps_per_epoch; ++s, ++step) {
      std::vector<std::size_t> idx(static_cast<std::size_t>(schedule.batch_size));
      for (auto& i : idx) i = pick(rng);
      const Batch batch = make_batch(pairs, idx);
      LossBreakdown loss;
      try {
        loss = batch_loss(net, batch, options.labels, options.weights);
        if (!std::isfinite(loss.scalar())) throw NumericError("non-finite total loss");
        zero_grads(params);
        backward(loss.total);
        sgd.step(params, lr);
      } catch (const NumericError& e) {
        if (options.out_dir) {
          dump_failure(*options.out_dir, net, batch, idx, step, e.what());
          write_loss_history(*options.out_dir / "loss_history.csv", result.history);
        }
        throw NumericError("training halted at step " + std::to_string(step) + ": " + e.what());
      }
      result.history.push_back({step, epoch, loss.apn, loss.cls1, loss.cls2, loss.cls3, loss.cls, loss.loc_iou,
                                 loss.loc_l1, loss.loc, loss.scalar(), lr});
    }
    if (options.on_epoch_end) options.on_epoch_end(epoch, net);
    if (options.out_dir && schedule.checkpoint_every > 0 && (epoch + 1) % schedule.checkpoint_every == 0) {
      write_checkpoint(*options.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".bin"),
                       net.to_checkpoint());
    }
  }
  net.set_backbone_trainable(true);
  if (options.out_dir) {
    write_loss_history(*options.out_dir / "loss_history.csv", result.history);
    result.checkpoint = *options.out_dir / "checkpoint.bin";
    write_checkpoint(*result.checkpoint, net.to_checkpoint());
  }
  return result;
}

}  // namespace apn

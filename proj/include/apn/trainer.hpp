#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "apn/losses.hpp"
#include "apn/network.hpp"
#include "apn/synthetic.hpp"

namespace apn {

struct TrainSchedule {
  int total_epochs = 20;
  int freeze_epochs = 4;  // backbone frozen for epochs [0, freeze_epochs)
  int steps_per_epoch = 100;
  int batch_size = 8;
  double lr_start = 0.01;
  double lr_end = 0.001;
  double momentum = 0.9;
  double max_grad_norm = 10.0;  // global gradient-norm clip; 0 disables
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // epochs; 0 = only at the end

  static TrainSchedule toy();
  static TrainSchedule paper();

  // Throws ConfigError naming the offending field.
  void validate() const;
  // lr_start * (lr_end / lr_start)^(epoch / (total_epochs - 1))
  double lr_at(int epoch) const;
};

struct LossRecord {
  int step = 0;
  int epoch = 0;
  double apn = 0.0;
  double cls1 = 0.0;
  double cls2 = 0.0;
  double cls3 = 0.0;
  double cls = 0.0;
  double loc_iou = 0.0;
  double loc_l1 = 0.0;
  double loc = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct Batch {
  Var templ;
  Var search;
  std::vector<CornerBox> gts;  // search-patch coordinates
};

Batch make_batch(std::span<const TrainingPair> pairs, std::span<const std::size_t> indices);

// Labels for every batch entry, built against the anchors decoded from the
// forward pass (anchor values are constants for the losses).
std::vector<LabelBundle> build_batch_labels(const Network& net, const NetworkOutputs& out,
                                            std::span<const CornerBox> gts, const LabelConfig& cfg);

// Forward + labels + total loss. Labels are rebuilt from this forward pass
// unless `fixed_labels` is supplied.
LossBreakdown batch_loss(const Network& net, const Batch& batch, const LabelConfig& labels, const LossWeights& w,
                         const std::vector<LabelBundle>* fixed_labels = nullptr,
                         std::vector<LabelBundle>* labels_out = nullptr);

// Mean total loss over all pairs, evaluated in chunks of batch_size.
double dataset_loss(const Network& net, std::span<const TrainingPair> pairs, const LabelConfig& labels,
                    const LossWeights& w, int batch_size);

struct TrainOptions {
  LabelConfig labels;
  LossWeights weights;
  std::optional<std::filesystem::path> out_dir;
  std::function<void(int epoch, const Network&)> on_epoch_end;
};

struct TrainResult {
  std::vector<LossRecord> history;
  std::optional<std::filesystem::path> checkpoint;
};

// SGD over the fixed pair set. Writes loss_history.csv and checkpoint.bin into
// out_dir when given. On a non-finite loss the current batch description and
// parameters are dumped there before a NumericError is thrown.
TrainResult train(Network& net, const TrainSchedule& schedule, std::span<const TrainingPair> pairs,
                  const TrainOptions& options);

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history);

}  // namespace apn

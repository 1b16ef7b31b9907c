#include "gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "apn/trainer.hpp"

namespace apn::testing {

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

GradReport check_total_loss_gradients(std::uint64_t seed, int per_group, double step) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig cfg = ModelConfig::tiny();
  Network net(cfg, seed);
  PairOptions po;
  po.template_size = cfg.template_size;
  po.search_size = cfg.search_size;
  const auto pairs = make_pair_set(2, po, seed, 2);
  const std::vector<std::size_t> idx{0, 1};
  const Batch batch = make_batch(pairs, idx);
  const LabelConfig lc;
  const LossWeights w;

  std::vector<LabelBundle> labels;
  const LossBreakdown base = batch_loss(net, batch, lc, w, nullptr, &labels);
  auto params = net.parameters();
  zero_grads(params);
  backward(base.total);

  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> candidates;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].var.value().size(); ++i) candidates[params[p].group].emplace_back(p, i);
  }

  GradReport report;
  report.per_group_min = SIZE_MAX;
  std::mt19937_64 rng(seed ^ 0x6A7Dull);
  for (const char* group : {"backbone", "apn", "fusion", "heads"}) {
    auto pool = candidates[group];
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t accepted = 0;
    for (std::size_t k = 0; k < pool.size() && accepted < static_cast<std::size_t>(per_group); ++k) {
      auto [p, i] = pool[k];
      Var v = params[p].var;
      const double analytic = v.grad()[i];
      const double orig = v.value()[i];
      v.mutable_value()[i] = orig + step;
      const double up = batch_loss(net, batch, lc, w, &labels).scalar();
      v.mutable_value()[i] = orig - step;
      const double down = batch_loss(net, batch, lc, w, &labels).scalar();
      v.mutable_value()[i] = orig;
      const double fwd = (up - base.scalar()) / step;
      const double bwd = (base.scalar() - down) / step;
      if (relative_error(fwd, bwd, kGradFloor) > 1e-4) {
        ++report.kinks_skipped;
        continue;
      }
      ++accepted;
      const double numeric = (up - down) / (2.0 * step);
      GradSample s{params[p].name, group, i, analytic, numeric, relative_error(analytic, numeric, kGradFloor)};
      report.max_rel_error = std::max(report.max_rel_error, s.rel_error);
      report.samples.push_back(s);
    }
    report.per_group_min = std::min(report.per_group_min, accepted);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace apn::testing

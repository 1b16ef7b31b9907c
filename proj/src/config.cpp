#include "apn/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "apn/error.hpp"
#include "apn/eval.hpp"

namespace apn {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class Section {
 public:
  Section(const json& j, std::string where, std::set<std::string> allowed) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    for (const auto& [key, _] : j.items()) {
      if (!allowed.contains(key)) throw ConfigError(where_ + "." + key + ": unknown key");
    }
  }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<long long>() >= 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else {
      ok = v.is_string();
    }
    if (!ok) throw ConfigError(where_ + "." + key + ": wrong type");
    out = v.get<T>();
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string where_;
};

// Comments attached to leaf keys by their dotted path.
std::map<std::string, std::string> comments_for(const RunConfig& c) {
  std::map<std::string, std::string> m{
      {"loss.cls1", "published: lambda_cls1 = 1.2"},
      {"loss.cls2", "published: lambda_cls2 = 1"},
      {"loss.cls3", "published: lambda_cls3 = 1"},
      {"loss.loc1", "published: lambda_loc1 = 1"},
      {"loss.loc2", "published: lambda_loc2 = 1"},
      {"schedule.momentum", "published: SGD momentum 0.9"},
      {"schedule.max_grad_norm", "not in the published protocol; 0 disables clipping"},
      {"labels.iou_pos", "anchors with IoU >= 0.6 are positive"},
      {"labels.iou_neg", "anchors with IoU <= 0.3 are negative"},
  };
  if (c.preset == "paper") {
    m["model.template_size"] = "published: 127 x 127 template patch";
    m["model.search_size"] = "published: 287 x 287 search patch";
    m["schedule.total_epochs"] = "published: 50 epochs";
    m["schedule.freeze_epochs"] = "published: backbone frozen for the first 10 epochs";
    m["schedule.batch_size"] = "published: minibatch of 124 pairs";
    m["schedule.lr_start"] = "published: lr decayed in log space from 0.005";
    m["schedule.lr_end"] = "published: ... to 0.0005";
  } else {
    m["model.template_size"] = "toy scale; the paper preset uses 127";
    m["model.search_size"] = "toy scale; the paper preset uses 287";
    m["schedule.lr_start"] = "toy scale; the paper preset uses 0.005 -> 0.0005 in log space";
  }
  return m;
}

void emit(std::ostringstream& os, const ordered_json& j, const std::string& path, int indent,
          const std::map<std::string, std::string>& notes) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  if (j.is_object()) {
    os << "{\n";
    std::size_t k = 0;
    for (const auto& [key, v] : j.items()) {
      const std::string sub = path.empty() ? key : path + "." + key;
      os << pad << "  " << json(key).dump() << ": ";
      const bool leaf = !v.is_object() && !(v.is_array() && !v.empty() && v.front().is_object());
      if (leaf) {
        os << v.dump();
      } else {
        emit(os, v, sub, indent + 2, notes);
      }
      if (++k < j.size()) os << ",";
      if (leaf) {
        if (auto it = notes.find(sub); it != notes.end()) os << "  // " << it->second;
      }
      os << "\n";
    }
    os << pad << "}";
  } else if (j.is_array()) {
    os << "[\n";
    for (std::size_t k = 0; k < j.size(); ++k) {
      os << pad << "  " << j[k].dump();
      if (k + 1 < j.size()) os << ",";
      os << "\n";
    }
    os << pad << "]";
  } else {
    os << j.dump();
  }
}

}  // namespace

RunConfig RunConfig::preset_defaults(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "toy") {
    c.model = ModelConfig::toy();
    c.schedule = TrainSchedule::toy();
  } else if (name == "paper") {
    c.model = ModelConfig::paper();
    c.schedule = TrainSchedule::paper();
    c.data.pairs.template_size = c.model.template_size;
    c.data.pairs.search_size = c.model.search_size;
  } else {
    throw ConfigError("preset: unknown preset '" + name + "' (expected toy or paper)");
  }
  return c;
}

void RunConfig::validate() const {
  schedule.validate();
  tracker.validate();
  if (!(labels.area_ratio >= 1.0)) throw ConfigError("labels.area_ratio: must be >= 1");
  if (!(labels.iou_neg >= 0.0 && labels.iou_neg < labels.iou_pos && labels.iou_pos <= 1.0)) {
    throw ConfigError("labels.iou_pos: need 0 <= iou_neg < iou_pos <= 1");
  }
  for (auto [key, v] : {std::pair{"loss.cls1", loss.cls1}, {"loss.cls2", loss.cls2}, {"loss.cls3", loss.cls3},
                        {"loss.loc1", loss.loc1}, {"loss.loc2", loss.loc2}, {"loss.lambda1", loss.lambda1},
                        {"loss.lambda2", loss.lambda2}}) {
    if (!(v >= 0.0)) throw ConfigError(std::string(key) + ": must be >= 0");
  }
  if (!(loss.smooth_l1_beta > 0.0)) throw ConfigError("loss.smooth_l1_beta: must be positive");
  if (data.train_pairs < 1) throw ConfigError("data.train_pairs: must be >= 1");
  if (data.max_gap < 0) throw ConfigError("data.max_gap: must be >= 0");
  if (data.pairs.template_size != model.template_size) {
    throw ConfigError("data.template_size: must equal model.template_size");
  }
  if (data.pairs.search_size != model.search_size) throw ConfigError("data.search_size: must equal model.search_size");
  if (!(eval.precision_rank_px >= 0.0 && eval.precision_rank_px <= kPrecisionMax)) {
    throw ConfigError("eval.precision_rank_px: must lie in [0, 50]");
  }
  if (eval.precision_rank_px != static_cast<int>(eval.precision_rank_px)) {
    throw ConfigError("eval.precision_rank_px: must be a whole number of pixels");
  }
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["model_path"] = model_path;
  j["model"] = ordered_json::parse(model.to_json().dump());
  j["schedule"] = {{"total_epochs", schedule.total_epochs},   {"freeze_epochs", schedule.freeze_epochs},
                   {"steps_per_epoch", schedule.steps_per_epoch}, {"batch_size", schedule.batch_size},
                   {"lr_start", schedule.lr_start},           {"lr_end", schedule.lr_end},
                   {"momentum", schedule.momentum},           {"max_grad_norm", schedule.max_grad_norm},
                   {"checkpoint_every", schedule.checkpoint_every}};
  j["loss"] = {{"cls1", loss.cls1},       {"cls2", loss.cls2},       {"cls3", loss.cls3},
               {"loc1", loss.loc1},       {"loc2", loss.loc2},       {"lambda1", loss.lambda1},
               {"lambda2", loss.lambda2}, {"smooth_l1_beta", loss.smooth_l1_beta}};
  j["labels"] = {{"area_ratio", labels.area_ratio}, {"iou_pos", labels.iou_pos}, {"iou_neg", labels.iou_neg}};
  j["tracker"] = {{"context", tracker.context},   {"window_influence", tracker.window_influence},
                  {"alpha1", tracker.alpha1},     {"alpha2", tracker.alpha2},
                  {"alpha3", tracker.alpha3},     {"scale_damping", tracker.scale_damping}};
  j["data"] = {{"train_pairs", data.train_pairs},
               {"max_gap", data.max_gap},
               {"template_size", data.pairs.template_size},
               {"search_size", data.pairs.search_size},
               {"context", data.pairs.context},
               {"max_shift", data.pairs.max_shift},
               {"scale_jitter", data.pairs.scale_jitter}};
  j["eval"] = {{"precision_rank_px", eval.precision_rank_px}};
  return j;
}

std::string RunConfig::to_commented_json() const {
  std::ostringstream os;
  emit(os, to_json(), "", 0, comments_for(*this));
  os << "\n";
  return os.str();
}

RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset_override) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    // Empty or comment-only text means all defaults.
    const json wrapped = json::parse("[" + text + "\n]", nullptr, false, true);
    if (!wrapped.is_array() || !wrapped.empty()) throw ConfigError(std::string("config: ") + e.what());
  }
  if (j.is_null()) j = json::object();
  const Section top(j, "config",
                    {"preset", "seed", "model_path", "model", "schedule", "loss", "labels", "tracker", "data", "eval"});

  std::string preset = "toy";
  top.read("preset", preset);
  if (preset_override) preset = *preset_override;
  RunConfig c = RunConfig::preset_defaults(preset);
  top.read("seed", c.seed);
  top.read("model_path", c.model_path);

  if (!c.model_path.empty()) {
    std::ifstream is(c.model_path);
    if (!is) throw ConfigError("model_path: cannot open '" + c.model_path + "'");
    try {
      c.model = ModelConfig::from_json(json::parse(is, nullptr, true, true), c.model);
    } catch (const json::parse_error& e) {
      throw ConfigError("model_path: " + std::string(e.what()));
    }
  }
  if (top.has("model")) c.model = ModelConfig::from_json(top.at("model"), c.model);
  // Pair sizes follow the model unless set explicitly.
  c.data.pairs.template_size = c.model.template_size;
  c.data.pairs.search_size = c.model.search_size;

  if (top.has("schedule")) {
    const Section s(top.at("schedule"), "schedule",
                    {"total_epochs", "freeze_epochs", "steps_per_epoch", "batch_size", "lr_start", "lr_end",
                     "momentum", "max_grad_norm", "checkpoint_every"});
    s.read("total_epochs", c.schedule.total_epochs);
    s.read("freeze_epochs", c.schedule.freeze_epochs);
    s.read("steps_per_epoch", c.schedule.steps_per_epoch);
    s.read("batch_size", c.schedule.batch_size);
    s.read("lr_start", c.schedule.lr_start);
    s.read("lr_end", c.schedule.lr_end);
    s.read("momentum", c.schedule.momentum);
    s.read("max_grad_norm", c.schedule.max_grad_norm);
    s.read("checkpoint_every", c.schedule.checkpoint_every);
  }
  if (top.has("loss")) {
    const Section s(top.at("loss"), "loss",
                    {"cls1", "cls2", "cls3", "loc1", "loc2", "lambda1", "lambda2", "smooth_l1_beta"});
    s.read("cls1", c.loss.cls1);
    s.read("cls2", c.loss.cls2);
    s.read("cls3", c.loss.cls3);
    s.read("loc1", c.loss.loc1);
    s.read("loc2", c.loss.loc2);
    s.read("lambda1", c.loss.lambda1);
    s.read("lambda2", c.loss.lambda2);
    s.read("smooth_l1_beta", c.loss.smooth_l1_beta);
  }
  if (top.has("labels")) {
    const Section s(top.at("labels"), "labels", {"area_ratio", "iou_pos", "iou_neg"});
    s.read("area_ratio", c.labels.area_ratio);
    s.read("iou_pos", c.labels.iou_pos);
    s.read("iou_neg", c.labels.iou_neg);
  }
  if (top.has("tracker")) {
    const Section s(top.at("tracker"), "tracker",
                    {"context", "window_influence", "alpha1", "alpha2", "alpha3", "scale_damping"});
    s.read("context", c.tracker.context);
    s.read("window_influence", c.tracker.window_influence);
    s.read("alpha1", c.tracker.alpha1);
    s.read("alpha2", c.tracker.alpha2);
    s.read("alpha3", c.tracker.alpha3);
    s.read("scale_damping", c.tracker.scale_damping);
  }
  if (top.has("data")) {
    const Section s(top.at("data"), "data",
                    {"train_pairs", "max_gap", "template_size", "search_size", "context", "max_shift",
                     "scale_jitter"});
    s.read("train_pairs", c.data.train_pairs);
    s.read("max_gap", c.data.max_gap);
    s.read("template_size", c.data.pairs.template_size);
    s.read("search_size", c.data.pairs.search_size);
    s.read("context", c.data.pairs.context);
    s.read("max_shift", c.data.pairs.max_shift);
    s.read("scale_jitter", c.data.pairs.scale_jitter);
  }
  if (top.has("eval")) {
    const Section s(top.at("eval"), "eval", {"precision_rank_px"});
    s.read("precision_rank_px", c.eval.precision_rank_px);
  }
  c.schedule.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::optional<std::string>& preset_override) {
  if (!path) return parse_config("{}", preset_override);
  std::ifstream is(*path);
  if (!is) throw ConfigError("config: cannot open '" + path->string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), preset_override);
}

}  // namespace apn

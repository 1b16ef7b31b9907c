#include "apn/network.hpp"

#include <random>
#include <set>

#include "apn/error.hpp"

namespace apn {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T read_as(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

// Correlation averaged over the template window, so the response scale does
// not grow with the template size.
Var mean_xcorr(const Var& search, const Var& templ) {
  const Shape ts = templ.shape();
  return scale(dw_xcorr(search, templ), 1.0 / (static_cast<double>(ts.h) * ts.w));
}

}  // namespace

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.blocks = {{16, 3, 2, 0}, {32, 3, 2, 0}, {48, 3, 1, 0}, {48, 3, 1, 0}, {32, 3, 1, 0}};
  c.template_size = 64;
  c.search_size = 96;
  c.anchor_scale = 4.0;
  c.anchor_init = 16.0;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.blocks = {{8, 3, 2, 0}, {8, 3, 2, 0}, {8, 3, 1, 1}, {8, 3, 1, 1}, {8, 3, 1, 1}};
  c.template_size = 32;
  c.search_size = 48;
  c.anchor_scale = 4.0;
  c.anchor_init = 8.0;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  // AlexNet-shaped: 384-channel conv4, 256-channel conv5, total stride 8.
  c.blocks = {{96, 11, 2, 0}, {256, 5, 2, 0}, {384, 3, 2, 0}, {384, 3, 1, 0}, {256, 3, 1, 0}};
  c.template_size = 127;
  c.search_size = 287;
  c.anchor_scale = 8.0;
  c.anchor_init = 32.0;
  return c;
}

int ModelConfig::total_stride() const {
  int s = 1;
  for (const auto& b : blocks) s *= b.stride;
  return s;
}

json ModelConfig::to_json() const {
  json blocks_j = json::array();
  for (const auto& b : blocks) {
    blocks_j.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride}, {"padding", b.padding}});
  }
  return {{"input_channels", input_channels}, {"blocks", blocks_j},         {"template_size", template_size},
          {"search_size", search_size},       {"anchor_scale", anchor_scale}, {"anchor_init", anchor_init}};
}

ModelConfig ModelConfig::from_json(const json& j) { return from_json(j, toy()); }

ModelConfig ModelConfig::from_json(const json& j, const ModelConfig& base) {
  const std::string where = "model";
  if (!j.is_object()) throw ConfigError("model: expected an object");
  reject_unknown(j, {"input_channels", "blocks", "template_size", "search_size", "anchor_scale", "anchor_init"},
                 where);
  ModelConfig c = base;
  if (j.contains("input_channels")) c.input_channels = read_as<int>(j, "input_channels", where);
  if (j.contains("template_size")) c.template_size = read_as<int>(j, "template_size", where);
  if (j.contains("search_size")) c.search_size = read_as<int>(j, "search_size", where);
  if (j.contains("anchor_scale")) c.anchor_scale = read_as<double>(j, "anchor_scale", where);
  if (j.contains("anchor_init")) c.anchor_init = read_as<double>(j, "anchor_init", where);
  if (j.contains("blocks")) {
    const json& bj = j.at("blocks");
    if (!bj.is_array() || bj.size() != 5) throw ConfigError("model.blocks: expected an array of 5 blocks");
    c.blocks.clear();
    for (std::size_t i = 0; i < bj.size(); ++i) {
      const std::string w = "model.blocks[" + std::to_string(i) + "]";
      reject_unknown(bj[i], {"channels", "kernel", "stride", "padding"}, w);
      BlockSpec b;
      b.channels = read_as<int>(bj[i], "channels", w);
      b.kernel = read_as<int>(bj[i], "kernel", w);
      b.stride = bj[i].contains("stride") ? read_as<int>(bj[i], "stride", w) : 1;
      b.padding = bj[i].contains("padding") ? read_as<int>(bj[i], "padding", w) : 0;
      if (b.channels < 1 || b.kernel < 1 || b.stride < 1 || b.padding < 0) throw ConfigError(w + ": invalid values");
      c.blocks.push_back(b);
    }
  }
  if (c.input_channels < 1 || c.template_size < 1 || c.search_size <= c.template_size) {
    throw ConfigError("model: need input_channels >= 1 and search_size > template_size >= 1");
  }
  if (!(c.anchor_scale > 0.0)) throw ConfigError("model.anchor_scale: must be positive");
  return c;
}

Network::Network(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.blocks.size() != 5) throw ConfigError("model: exactly five backbone blocks are required");
  auto size_after = [&](int in, int upto) {
    for (int b = 0; b < upto; ++b) {
      const auto& spec = cfg_.blocks[b];
      in = conv_output_size(in, spec.kernel, spec.stride, spec.padding);
      if (in < 1) return 0;
    }
    return in;
  };
  const int t4 = size_after(cfg_.template_size, 4);
  const int t5 = size_after(cfg_.template_size, 5);
  const int s4 = size_after(cfg_.search_size, 4);
  const int s5 = size_after(cfg_.search_size, 5);
  // Adjust convs are 3x3 valid.
  if (t4 < 3 || t5 < 3 || s4 < t4 || s5 < t5) {
    throw ConfigError("model: patch sizes " + std::to_string(cfg_.template_size) + "/" +
                      std::to_string(cfg_.search_size) + " leave no room for the 3x3 adjust layers");
  }
  const int r1 = s4 - t4 + 1;
  const int r2 = s5 - t5 + 1;
  if (r1 < r2) {
    throw ConfigError("model: mid-level similarity map (" + std::to_string(r1) + ") is smaller than the deep one (" +
                      std::to_string(r2) + "); no valid convolution aligns them");
  }
  const int r1_kernel = r1 - r2 + 1;

  std::mt19937_64 rng(seed);
  int in = cfg_.input_channels;
  for (int b = 0; b < 5; ++b) {
    const auto& s = cfg_.blocks[b];
    layers_.backbone.emplace_back("backbone.block" + std::to_string(b + 1), in, s.channels, s.kernel, s.stride,
                                  s.padding, rng);
    in = s.channels;
  }
  const int mid = cfg_.mid_channels();
  const int deep = cfg_.deep_channels();
  layers_.adj_search = ConvLayer("apn.adjust_search", mid, mid, 3, 1, 0, rng);
  layers_.adj_template = ConvLayer("apn.adjust_template", mid, mid, 3, 1, 0, rng);
  layers_.anchor_hidden = ConvLayer("apn.anchor_hidden", mid, mid, 3, 1, 1, rng);
  layers_.anchor_out = ConvLayer("apn.anchor_out", mid, 4, 1, 1, 0, rng);
  layers_.deep_search = ConvLayer("fusion.deep_search", deep, deep, 3, 1, 0, rng);
  layers_.deep_template = ConvLayer("fusion.deep_template", deep, deep, 3, 1, 0, rng);
  layers_.r2_proj = ConvLayer("fusion.r2_proj", deep, deep, 1, 1, 0, rng);
  layers_.r1_proj = ConvLayer("fusion.r1_proj", mid, deep, r1_kernel, 1, 0, rng);
  layers_.reduce = ConvLayer("fusion.reduce", 2 * deep, deep, 1, 1, 0, rng);
  layers_.cls_tower = ConvLayer("heads.cls_tower", deep, deep, 3, 1, 1, rng);
  layers_.cls1 = ConvLayer("heads.cls1", deep, 2, 1, 1, 0, rng);
  layers_.cls2 = ConvLayer("heads.cls2", deep, 2, 1, 1, 0, rng);
  layers_.cls3 = ConvLayer("heads.cls3", deep, 1, 1, 1, 0, rng);
  layers_.loc_tower = ConvLayer("heads.loc_tower", deep, deep, 3, 1, 1, rng);
  layers_.loc = ConvLayer("heads.loc", deep, 4, 1, 1, 0, rng);

  layers_.anchor_out.bias.mutable_value().fill(cfg_.anchor_init / cfg_.anchor_scale);

  grid_ = GridGeometry{static_cast<double>(cfg_.search_size), static_cast<double>(cfg_.search_size),
                       static_cast<double>(cfg_.total_stride()), r2, r2};
  grid_.validate();
}

FeaturePair Network::extract_features(const Var& patch, Branch branch) const {
  const int expected = branch == Branch::Template ? cfg_.template_size : cfg_.search_size;
  const Shape s = patch.shape();
  if (s.h != expected || s.w != expected || s.c != cfg_.input_channels) {
    throw ShapeError(std::string(branch == Branch::Template ? "template" : "search") + " patch " + s.str() +
                     " does not match configured input " + std::to_string(cfg_.input_channels) + "x" +
                     std::to_string(expected) + "x" + std::to_string(expected));
  }
  if (branch == Branch::Template) ++template_calls_;
  Var x = patch;
  FeaturePair out;
  for (std::size_t b = 0; b < layers_.backbone.size(); ++b) {
    x = relu(layers_.backbone[b].forward(x));
    if (b == 3) out.mid = x;
  }
  out.deep = x;
  return out;
}

ApnOutputs Network::apn_forward(const Var& mid_x, const Var& mid_z) const {
  ApnOutputs out;
  out.similarity = mean_xcorr(relu(layers_.adj_search.forward(mid_x)), relu(layers_.adj_template.forward(mid_z)));
  const Var hidden = relu(layers_.anchor_hidden.forward(out.similarity));
  out.anchors = scale(layers_.anchor_out.forward(hidden), cfg_.anchor_scale);
  return out;
}

Var Network::fusion_forward(const Var& deep_x, const Var& deep_z, const Var& similarity) const {
  const Var r2 = mean_xcorr(relu(layers_.deep_search.forward(deep_x)), relu(layers_.deep_template.forward(deep_z)));
  const Var r3 = concat_channels(relu(layers_.r2_proj.forward(r2)), relu(layers_.r1_proj.forward(similarity)));
  return relu(layers_.reduce.forward(r3));
}

HeadOutputs Network::heads_forward(const Var& fused) const {
  HeadOutputs out;
  const Var cls = relu(layers_.cls_tower.forward(fused));
  out.cls1 = layers_.cls1.forward(cls);
  out.cls2 = layers_.cls2.forward(cls);
  out.cls3 = sigmoid(layers_.cls3.forward(cls));
  out.loc = layers_.loc.forward(relu(layers_.loc_tower.forward(fused)));
  return out;
}

NetworkOutputs Network::forward(const Var& template_patch, const Var& search_patch) const {
  return forward_search(extract_features(template_patch, Branch::Template), search_patch);
}

NetworkOutputs Network::forward_search(const FeaturePair& templ, const Var& search_patch) const {
  const FeaturePair x = extract_features(search_patch, Branch::Search);
  const ApnOutputs apn = apn_forward(x.mid, templ.mid);
  const Var fused = fusion_forward(x.deep, templ.deep, apn.similarity);
  const HeadOutputs heads = heads_forward(fused);
  const Shape ds = apn.anchors.shape();
  for (const Var* v : {&heads.cls1, &heads.cls2, &heads.cls3, &heads.loc}) {
    if (v->shape().h != ds.h || v->shape().w != ds.w) {
      throw ShapeError("head map " + v->shape().str() + " misaligned with anchor map " + ds.str());
    }
  }
  return {apn.anchors, heads.cls1, heads.cls2, heads.cls3, heads.loc, apn.similarity, fused};
}

std::vector<std::pair<std::string, ConvLayer*>> Network::named_layers() {
  std::vector<std::pair<std::string, ConvLayer*>> out;
  for (std::size_t b = 0; b < layers_.backbone.size(); ++b) {
    out.emplace_back("backbone.block" + std::to_string(b + 1), &layers_.backbone[b]);
  }
  out.emplace_back("apn.adjust_search", &layers_.adj_search);
  out.emplace_back("apn.adjust_template", &layers_.adj_template);
  out.emplace_back("apn.anchor_hidden", &layers_.anchor_hidden);
  out.emplace_back("apn.anchor_out", &layers_.anchor_out);
  out.emplace_back("fusion.deep_search", &layers_.deep_search);
  out.emplace_back("fusion.deep_template", &layers_.deep_template);
  out.emplace_back("fusion.r2_proj", &layers_.r2_proj);
  out.emplace_back("fusion.r1_proj", &layers_.r1_proj);
  out.emplace_back("fusion.reduce", &layers_.reduce);
  out.emplace_back("heads.cls_tower", &layers_.cls_tower);
  out.emplace_back("heads.cls1", &layers_.cls1);
  out.emplace_back("heads.cls2", &layers_.cls2);
  out.emplace_back("heads.cls3", &layers_.cls3);
  out.emplace_back("heads.loc_tower", &layers_.loc_tower);
  out.emplace_back("heads.loc", &layers_.loc);
  return out;
}

std::vector<std::pair<std::string, const ConvLayer*>> Network::named_layers() const {
  std::vector<std::pair<std::string, const ConvLayer*>> out;
  for (auto& [name, layer] : const_cast<Network*>(this)->named_layers()) out.emplace_back(name, layer);
  return out;
}

ConvLayer& Network::layer(const std::string& name) {
  for (auto& [n, l] : named_layers()) {
    if (n == name) return *l;
  }
  throw UsageError("no layer named '" + name + "'");
}

std::vector<NamedParameter> Network::parameters() const {
  std::vector<NamedParameter> out;
  for (const auto& [name, l] : named_layers()) {
    const std::string group = name.substr(0, name.find('.'));
    out.push_back({name + ".weight", group, l->weight});
    out.push_back({name + ".bias", group, l->bias});
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, l] : named_layers()) n += l->parameter_count();
  return n;
}

void Network::set_backbone_trainable(bool trainable) {
  for (auto& l : layers_.backbone) {
    l.weight.set_requires_grad(trainable);
    l.bias.set_requires_grad(trainable);
  }
}

void Network::set_trainable(bool trainable) {
  for (auto& [_, l] : named_layers()) {
    l->weight.set_requires_grad(trainable);
    l->bias.set_requires_grad(trainable);
  }
}

Network Network::clone() const {
  Network copy(cfg_, 0);
  auto dst = copy.named_layers();
  auto src = named_layers();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second->weight.mutable_value() = src[i].second->weight.value();
    dst[i].second->bias.mutable_value() = src[i].second->bias.value();
    dst[i].second->weight.set_requires_grad(src[i].second->weight.requires_grad());
    dst[i].second->bias.set_requires_grad(src[i].second->bias.requires_grad());
  }
  return copy;
}

Checkpoint Network::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.model_json = cfg_.to_json().dump();
  for (const auto& p : parameters()) ckpt.params.emplace_back(p.name, p.var.value());
  return ckpt;
}

Network Network::from_checkpoint(const Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(ckpt.model_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint model config is not valid JSON: ") + e.what());
  }
  Network net(ModelConfig::from_json(j), 0);
  auto params = net.parameters();
  if (params.size() != ckpt.params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.params[i];
    if (name != params[i].name || t.shape() != params[i].var.shape()) {
      throw ConfigError("checkpoint tensor '" + name + "' " + t.shape().str() + " does not match '" +
                        params[i].name + "' " + params[i].var.shape().str());
    }
    params[i].var.mutable_value() = t;
  }
  return net;
}

}  // namespace apn

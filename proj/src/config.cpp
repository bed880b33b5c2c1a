#include "mixseg/config.hpp"

#include <cmath>
#include <functional>
#include <map>

namespace mixseg {

using nlohmann::json;

std::string to_string(MixStrategy s) {
  switch (s) {
    case MixStrategy::none: return "none";
    case MixStrategy::cutmix: return "cutmix";
    case MixStrategy::classmix: return "classmix";
    case MixStrategy::complexmix: return "complexmix";
  }
  return "?";
}

MixStrategy parse_strategy(const std::string& s) {
  if (s == "none") return MixStrategy::none;
  if (s == "cutmix") return MixStrategy::cutmix;
  if (s == "classmix") return MixStrategy::classmix;
  if (s == "complexmix") return MixStrategy::complexmix;
  throw ConfigError("strategy", "unknown strategy '" + s + "' (expected none|cutmix|classmix|complexmix)");
}

namespace {

void check(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ConfigError(field, msg);
}

double as_real(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field, "expected a string");
  return v.get<std::string>();
}

using Setter = std::function<void(const json&, const std::string&)>;

void apply_fields(const json& j, const std::string& prefix, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const std::string field = prefix.empty() ? key : prefix + "." + key;
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(field, "unknown field");
    it->second(value, field);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  check(labeled_fraction > 0.0 && labeled_fraction <= 1.0, "labeled_fraction", "must be in (0,1]");
  check(batch_size >= 1, "batch_size", "must be >= 1");
  check(total_iters >= 1, "total_iters", "must be >= 1");
  check(resolved_warmup() <= total_iters, "warmup_iters", "must not exceed total_iters");
  check(std::isfinite(lr0) && lr0 >= 0.0, "lr0", "must be finite and >= 0");
  check(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0,1)");
  check(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be >= 0");
  check(std::isfinite(poly_power) && poly_power >= 0.0, "poly_power", "must be >= 0");
  check(ema_alpha >= 0.0 && ema_alpha <= 1.0, "ema_alpha", "must be in [0,1]");
  check(tau > 0.0 && tau <= 1.0, "tau", "must be in (0,1]");
  check(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be finite and >= 0");
  check(!p_choices.empty(), "p_choices", "must not be empty");
  for (auto p : p_choices) check(p >= 1, "p_choices", "every p must be >= 1");
  check(hidden_channels >= 1, "hidden_channels", "must be >= 1");
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  const std::map<std::string, Setter> setters{
      {"labeled_fraction", [&](const json& v, const std::string& f) { c.labeled_fraction = as_real(v, f); }},
      {"batch_size", [&](const json& v, const std::string& f) { c.batch_size = as_count(v, f); }},
      {"total_iters", [&](const json& v, const std::string& f) { c.total_iters = as_count(v, f); }},
      {"warmup_iters",
       [&](const json& v, const std::string& f) {
         if (v.is_null()) {
           c.warmup_iters.reset();
         } else {
           c.warmup_iters = as_count(v, f);
         }
       }},
      {"lr0", [&](const json& v, const std::string& f) { c.lr0 = as_real(v, f); }},
      {"momentum", [&](const json& v, const std::string& f) { c.momentum = as_real(v, f); }},
      {"weight_decay", [&](const json& v, const std::string& f) { c.weight_decay = as_real(v, f); }},
      {"poly_power", [&](const json& v, const std::string& f) { c.poly_power = as_real(v, f); }},
      {"ema_alpha", [&](const json& v, const std::string& f) { c.ema_alpha = as_real(v, f); }},
      {"tau", [&](const json& v, const std::string& f) { c.tau = as_real(v, f); }},
      {"lambda", [&](const json& v, const std::string& f) { c.lambda = as_real(v, f); }},
      {"lambda_ramp_iters", [&](const json& v, const std::string& f) { c.lambda_ramp_iters = as_count(v, f); }},
      {"p_choices",
       [&](const json& v, const std::string& f) {
         if (!v.is_array()) throw ConfigError(f, "expected an array of integers");
         c.p_choices.clear();
         for (const auto& e : v) c.p_choices.push_back(as_count(e, f));
       }},
      {"block_pool",
       [&](const json& v, const std::string& f) {
         const auto s = as_string(v, f);
         if (s == "all") {
           c.block_pool = BlockClassPool::all_classes;
         } else if (s == "present") {
           c.block_pool = BlockClassPool::present_classes;
         } else {
           throw ConfigError(f, "expected 'all' or 'present'");
         }
       }},
      {"gate_normalization",
       [&](const json& v, const std::string& f) {
         const auto s = as_string(v, f);
         if (s == "gated") {
           c.gate_norm = GateNormalization::gated_pixels;
         } else if (s == "all") {
           c.gate_norm = GateNormalization::all_pixels;
         } else {
           throw ConfigError(f, "expected 'gated' or 'all'");
         }
       }},
      {"strategy",
       [&](const json& v, const std::string& f) {
         try {
           c.strategy = parse_strategy(as_string(v, f));
         } catch (const ConfigError& e) {
           throw ConfigError(f, e.what());
         }
       }},
      {"seed", [&](const json& v, const std::string& f) { c.seed = as_u64(v, f); }},
      {"eval_every", [&](const json& v, const std::string& f) { c.eval_every = as_count(v, f); }},
      {"hidden_channels", [&](const json& v, const std::string& f) { c.hidden_channels = as_count(v, f); }},
  };
  apply_fields(j, "", setters);
  c.validate();
  return c;
}

json experiment_to_json(const ExperimentConfig& c) {
  json j;
  j["labeled_fraction"] = c.labeled_fraction;
  j["batch_size"] = c.batch_size;
  j["total_iters"] = c.total_iters;
  j["warmup_iters"] = c.resolved_warmup();
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["poly_power"] = c.poly_power;
  j["ema_alpha"] = c.ema_alpha;
  j["tau"] = c.tau;
  j["lambda"] = c.lambda;
  j["lambda_ramp_iters"] = c.lambda_ramp_iters;
  j["p_choices"] = c.p_choices;
  j["block_pool"] = c.block_pool == BlockClassPool::all_classes ? "all" : "present";
  j["gate_normalization"] = c.gate_norm == GateNormalization::gated_pixels ? "gated" : "all";
  j["strategy"] = to_string(c.strategy);
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["hidden_channels"] = c.hidden_channels;
  return j;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  ShapesSceneSpec& sc = s.scene;
  const std::map<std::string, Setter> scene_setters{
      {"height", [&](const json& v, const std::string& f) { sc.height = as_count(v, f); }},
      {"width", [&](const json& v, const std::string& f) { sc.width = as_count(v, f); }},
      {"num_classes", [&](const json& v, const std::string& f) { sc.num_classes = as_count(v, f); }},
      {"min_shapes", [&](const json& v, const std::string& f) { sc.min_shapes = as_count(v, f); }},
      {"max_shapes", [&](const json& v, const std::string& f) { sc.max_shapes = as_count(v, f); }},
      {"min_extent", [&](const json& v, const std::string& f) { sc.min_extent = as_real(v, f); }},
      {"max_extent", [&](const json& v, const std::string& f) { sc.max_extent = as_real(v, f); }},
      {"noise_sigma", [&](const json& v, const std::string& f) { sc.noise_sigma = as_real(v, f); }},
      {"brightness_jitter", [&](const json& v, const std::string& f) { sc.brightness_jitter = as_real(v, f); }},
      {"class_colors",
       [&](const json& v, const std::string& f) {
         if (!v.is_array()) throw ConfigError(f, "expected an array of [r,g,b] triples");
         sc.class_colors.clear();
         for (const auto& rgb : v) {
           if (!rgb.is_array() || rgb.size() != 3) throw ConfigError(f, "each colour must be [r,g,b]");
           sc.class_colors.push_back({as_real(rgb[0], f), as_real(rgb[1], f), as_real(rgb[2], f)});
         }
       }},
  };
  const std::map<std::string, Setter> setters{
      {"scene", [&](const json& v, const std::string& f) { apply_fields(v, f, scene_setters); }},
      {"train_pool", [&](const json& v, const std::string& f) { s.train_pool = as_count(v, f); }},
      {"val_pool", [&](const json& v, const std::string& f) { s.val_pool = as_count(v, f); }},
      {"labeled_fraction", [&](const json& v, const std::string& f) { s.labeled_fraction = as_real(v, f); }},
      {"seed", [&](const json& v, const std::string& f) { s.seed = as_u64(v, f); }},
  };
  apply_fields(j, "", setters);
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("scene", e.what());
  }
  check(s.train_pool >= 1, "train_pool", "must be >= 1");
  check(s.labeled_fraction > 0.0 && s.labeled_fraction <= 1.0, "labeled_fraction", "must be in (0,1]");
  return s;
}

json dataset_spec_to_json(const DatasetSpec& s) {
  json scene;
  scene["height"] = s.scene.height;
  scene["width"] = s.scene.width;
  scene["num_classes"] = s.scene.num_classes;
  scene["min_shapes"] = s.scene.min_shapes;
  scene["max_shapes"] = s.scene.max_shapes;
  scene["min_extent"] = s.scene.min_extent;
  scene["max_extent"] = s.scene.max_extent;
  scene["noise_sigma"] = s.scene.noise_sigma;
  scene["brightness_jitter"] = s.scene.brightness_jitter;
  json colors = json::array();
  for (const auto& rgb : s.scene.class_colors) colors.push_back({rgb[0], rgb[1], rgb[2]});
  scene["class_colors"] = colors;
  json j;
  j["scene"] = scene;
  j["train_pool"] = s.train_pool;
  j["val_pool"] = s.val_pool;
  j["labeled_fraction"] = s.labeled_fraction;
  j["seed"] = s.seed;
  return j;
}

}  // namespace mixseg

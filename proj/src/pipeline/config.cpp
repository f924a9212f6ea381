#include "hcnf/pipeline/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "hcnf/core/error.hpp"

namespace hcnf::pipeline {

using nlohmann::json;

std::string_view pad_policy_name(PadPolicy p) { return p == PadPolicy::repeat_last ? "repeat-last" : "drop-short"; }

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(where_root(), "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.push_back(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ParseError(where(key), std::string("wrong type (") + it->type_name() + ")");
    }
  }

  void read_path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  template <typename Fn>
  void read_with(const char* key, Fn&& fn) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.push_back(key);
    fn(*it, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ParseError(where(it.key()), "unknown key");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where_root() const { return path_.empty() ? std::string("config") : path_; }

  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

std::string enum_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where, std::string("wrong type (") + j.type_name() + ")");
  return j.get<std::string>();
}

void fail(const std::string& where, const std::string& what) { throw ParseError(where, what); }

}  // namespace

void PipelineConfig::validate() const {
  if (crop_size < 8) fail("crop_size", "must be >= 8, got " + std::to_string(crop_size));
  if (group_size < 1) fail("group_size", "must be >= 1, got " + std::to_string(group_size));
  if (fps < 1) fail("fps", "must be >= 1, got " + std::to_string(fps));
  if (width < 4 || width % 4 != 0) fail("width", "must be a positive multiple of 4, got " + std::to_string(width));
  if (threads < 1) fail("threads", "must be >= 1, got " + std::to_string(threads));
  try {
    flow.validate();
  } catch (const ContractError& e) {
    fail("flow", e.what());
  }
  if (detector.scale_step <= 1.0) fail("detector.scale_step", "must be > 1");
  if (detector.stride_fraction <= 0.0) fail("detector.stride_fraction", "must be > 0");
  if (detector.min_size < 0 || detector.max_size < 0) fail("detector", "min_size and max_size must be >= 0");
  if (detector.min_neighbors < 1) fail("detector.min_neighbors", "must be >= 1");
  if (detector.iou_group <= 0.0 || detector.iou_group > 1.0) fail("detector.iou_group", "must be in (0, 1]");
  if (train.epochs < 1) fail("train.epochs", "must be >= 1");
  if (train.batch_size < 1) fail("train.batch_size", "must be >= 1");
  if (!(train.optimizer.lr > 0.0)) fail("train.lr", "must be > 0");
  if (train.motion_amplitude < 0.0) fail("train.motion_amplitude", "must be >= 0");
  if (train.synthetic_per_class < 1) fail("train.synthetic_per_class", "must be >= 1");
}

nets::ArchConfig PipelineConfig::arch() const {
  nets::ArchConfig a;
  a.width = width;
  a.input_size = crop_size;
  a.group_size = group_size;
  a.swap_backbones = swap_backbones;
  return a;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  ObjectReader r(j, "");
  r.read("crop_size", cfg.crop_size);
  r.read("group_size", cfg.group_size);
  r.read("fps", cfg.fps);
  r.read("width", cfg.width);
  r.read("swap_backbones", cfg.swap_backbones);
  r.read("seed", cfg.seed);
  r.read("threads", cfg.threads);
  r.read("strict", cfg.strict);
  r.read_with("pad_policy", [&](const json& v, const std::string& where) {
    const auto s = enum_string(v, where);
    if (s == "repeat-last")
      cfg.pad_policy = PadPolicy::repeat_last;
    else if (s == "drop-short")
      cfg.pad_policy = PadPolicy::drop_short;
    else
      fail(where, "expected \"repeat-last\" or \"drop-short\", got \"" + s + "\"");
  });
  r.read_with("flow", [&](const json& v, const std::string& where) {
    ObjectReader f(v, where);
    f.read("pyramid_scale", cfg.flow.pyramid_scale);
    f.read("levels", cfg.flow.levels);
    f.read("window", cfg.flow.window);
    f.read("iterations", cfg.flow.iterations);
    f.read("poly_n", cfg.flow.poly_n);
    f.read("poly_sigma", cfg.flow.poly_sigma);
    f.read("magnitude_clip", cfg.flow.magnitude_clip);
    f.finish();
  });
  r.read_with("detector", [&](const json& v, const std::string& where) {
    ObjectReader d(v, where);
    d.read("scale_step", cfg.detector.scale_step);
    d.read("stride_fraction", cfg.detector.stride_fraction);
    d.read("min_size", cfg.detector.min_size);
    d.read("max_size", cfg.detector.max_size);
    d.read("min_neighbors", cfg.detector.min_neighbors);
    d.read("iou_group", cfg.detector.iou_group);
    d.finish();
  });
  r.read_with("paths", [&](const json& v, const std::string& where) {
    ObjectReader p(v, where);
    p.read_path("cascade", cfg.paths.cascade);
    p.read_path("checkpoint", cfg.paths.checkpoint);
    p.read_path("init_checkpoint", cfg.paths.init_checkpoint);
    p.read_path("data", cfg.paths.data);
    p.read_path("kdef", cfg.paths.kdef);
    p.read_path("manifest", cfg.paths.manifest);
    p.finish();
  });
  r.read_with("train", [&](const json& v, const std::string& where) {
    ObjectReader t(v, where);
    auto& tr = cfg.train;
    t.read_with("dataset", [&](const json& d, const std::string& w) {
      const auto s = enum_string(d, w);
      if (s == "fer2013")
        tr.dataset = DatasetKind::fer2013;
      else if (s == "synthetic")
        tr.dataset = DatasetKind::synthetic;
      else
        fail(w, "expected \"fer2013\" or \"synthetic\", got \"" + s + "\"");
    });
    t.read("epochs", tr.epochs);
    t.read("batch_size", tr.batch_size);
    t.read("lr", tr.optimizer.lr);
    t.read("momentum", tr.optimizer.momentum);
    t.read_with("optimizer", [&](const json& d, const std::string& w) {
      const auto s = enum_string(d, w);
      if (s == "adam")
        tr.optimizer.method = OptimizerConfig::Method::adam;
      else if (s == "sgd")
        tr.optimizer.method = OptimizerConfig::Method::sgd;
      else
        fail(w, "expected \"adam\" or \"sgd\", got \"" + s + "\"");
    });
    t.read("fine_tune_backbones", tr.fine_tune_backbones);
    t.read_with("classes", [&](const json& d, const std::string& w) {
      if (!d.is_array()) fail(w, "expected an array of emotion names");
      tr.classes.clear();
      for (const auto& e : d) {
        auto parsed = parse_emotion(enum_string(e, w));
        if (!parsed) fail(w, "unknown emotion \"" + e.get<std::string>() + "\"");
        tr.classes.push_back(*parsed);
      }
    });
    t.read("train_per_class", tr.train_per_class);
    t.read("val_per_class", tr.val_per_class);
    t.read("synthetic_per_class", tr.synthetic_per_class);
    t.read("motion_amplitude", tr.motion_amplitude);
    t.finish();
  });
  r.finish();
  cfg.validate();
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  json classes = json::array();
  for (Emotion e : cfg.train.classes) classes.push_back(std::string(emotion_name(e)));
  return json{
      {"crop_size", cfg.crop_size},
      {"group_size", cfg.group_size},
      {"fps", cfg.fps},
      {"width", cfg.width},
      {"swap_backbones", cfg.swap_backbones},
      {"pad_policy", std::string(pad_policy_name(cfg.pad_policy))},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"strict", cfg.strict},
      {"flow",
       {{"pyramid_scale", cfg.flow.pyramid_scale},
        {"levels", cfg.flow.levels},
        {"window", cfg.flow.window},
        {"iterations", cfg.flow.iterations},
        {"poly_n", cfg.flow.poly_n},
        {"poly_sigma", cfg.flow.poly_sigma},
        {"magnitude_clip", cfg.flow.magnitude_clip}}},
      {"detector",
       {{"scale_step", cfg.detector.scale_step},
        {"stride_fraction", cfg.detector.stride_fraction},
        {"min_size", cfg.detector.min_size},
        {"max_size", cfg.detector.max_size},
        {"min_neighbors", cfg.detector.min_neighbors},
        {"iou_group", cfg.detector.iou_group}}},
      {"paths",
       {{"cascade", cfg.paths.cascade.string()},
        {"checkpoint", cfg.paths.checkpoint.string()},
        {"init_checkpoint", cfg.paths.init_checkpoint.string()},
        {"data", cfg.paths.data.string()},
        {"kdef", cfg.paths.kdef.string()},
        {"manifest", cfg.paths.manifest.string()}}},
      {"train",
       {{"dataset", cfg.train.dataset == DatasetKind::fer2013 ? "fer2013" : "synthetic"},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"optimizer", cfg.train.optimizer.method == OptimizerConfig::Method::adam ? "adam" : "sgd"},
        {"lr", cfg.train.optimizer.lr},
        {"momentum", cfg.train.optimizer.momentum},
        {"fine_tune_backbones", cfg.train.fine_tune_backbones},
        {"classes", classes},
        {"train_per_class", cfg.train.train_per_class},
        {"val_per_class", cfg.train.val_per_class},
        {"synthetic_per_class", cfg.train.synthetic_per_class},
        {"motion_amplitude", cfg.train.motion_amplitude}}},
  };
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ":byte " + std::to_string(e.byte), "invalid JSON");
  }
  return config_from_json(j);
}

void require_existing(const std::filesystem::path& path, std::string_view what) {
  if (path.empty()) throw IoError(std::string(what) + " path is not set");
  if (!std::filesystem::exists(path)) throw IoError(std::string(what) + " not found: " + path.string());
}

}  // namespace hcnf::pipeline

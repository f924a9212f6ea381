#include "hcnf/pipeline/training.hpp"

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hcnf/core/error.hpp"
#include "hcnf/data/batching.hpp"
#include "hcnf/data/fer2013.hpp"
#include "hcnf/data/kdef.hpp"
#include "hcnf/data/synthetic_faces.hpp"
#include "hcnf/data/video.hpp"
#include "hcnf/nets/checkpoint.hpp"
#include "hcnf/pipeline/pipeline.hpp"
#include "hcnf/tensor/ops.hpp"
#include "hcnf/tensor/optimizer.hpp"

namespace hcnf::pipeline {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// splitmix64 finaliser: decorrelates seeds derived from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum SeedTag : std::uint64_t {
  kSynthTrain = 1,
  kSynthVal,
  kSynthTest,
  kCapTrain,
  kCapVal,
  kCapTest,
  kFlowPairs,
  kSequences,
  kBatches,
};

std::uint64_t split_tag(data::Split s) { return static_cast<std::uint64_t>(s); }

int argmax_row(std::span<const float> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

Tensor<float> one_hot(int label) {
  Tensor<float> t(Shape{1, std::size_t(kNumEmotions)});
  t[label] = 1.0f;
  return t;
}

std::vector<Parameter<float>*> params_with_prefix(nets::StateDict<float> st) { return nets::parameters_of(st); }

void check_loss(double loss, int epoch, std::size_t batch, const OptimizerConfig& opt) {
  if (std::isfinite(loss)) return;
  char lr[32];
  std::snprintf(lr, sizeof lr, "%g", opt.lr);
  throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                      "; the learning rate (train.lr = " + lr + ") is likely too high, try lowering it");
}

std::uint32_t crc_bytes(std::uint32_t crc, const void* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(crc, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string file_crc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint32_t crc = 0;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    crc = crc_bytes(crc, buf.data(), std::size_t(in.gcount()));
  }
  return hex32(crc);
}

std::string samples_crc(const std::vector<data::Sample>& samples) {
  std::uint32_t crc = 0;
  for (const auto& s : samples) {
    const int label = static_cast<int>(s.label);
    crc = crc_bytes(crc, &label, sizeof label);
    crc = crc_bytes(crc, s.image.pixels().data(), s.image.pixels().size() * sizeof(float));
  }
  return hex32(crc);
}

json counts_json(const std::vector<data::Sample>& samples) {
  const auto counts = data::class_counts(samples);
  json j = json::object();
  for (int e = 0; e < kNumEmotions; ++e)
    if (counts[e]) j[std::string(emotion_name(static_cast<Emotion>(e)))] = counts[e];
  return j;
}

std::vector<data::Sample> restrict_classes(std::vector<data::Sample> samples, const std::vector<Emotion>& classes,
                                           std::size_t per_class, std::uint64_t seed) {
  std::vector<Emotion> keep = classes;
  if (keep.empty())
    for (int e = 0; e < kNumEmotions; ++e) keep.push_back(static_cast<Emotion>(e));
  if (per_class > 0) return data::balanced_subset(samples, keep, per_class, seed);
  std::erase_if(samples, [&](const data::Sample& s) { return std::find(keep.begin(), keep.end(), s.label) == keep.end(); });
  return samples;
}

nets::FusionModel<float> initial_model(const PipelineConfig& cfg) {
  if (cfg.paths.init_checkpoint.empty()) return nets::FusionModel<float>(cfg.arch(), cfg.seed);
  require_existing(cfg.paths.init_checkpoint, "initial checkpoint");
  auto model = nets::checkpoint_load(cfg.paths.init_checkpoint);
  const auto want = cfg.arch();
  const auto& got = model.arch;
  if (got.width != want.width || got.input_size != want.input_size || got.group_size != want.group_size ||
      got.swap_backbones != want.swap_backbones)
    throw ParseError("paths.init_checkpoint",
                     "checkpoint architecture (width " + std::to_string(got.width) + ", n " +
                         std::to_string(got.input_size) + ", group " + std::to_string(got.group_size) +
                         ") differs from the configuration");
  return model;
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::pretrain_rgb:
      return "pretrain-rgb";
    case Stage::pretrain_flow:
      return "pretrain-flow";
    case Stage::train_fusion:
      return "train-fusion";
  }
  return "";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::pretrain_rgb, Stage::pretrain_flow, Stage::train_fusion})
    if (stage_name(st) == s) return st;
  return std::nullopt;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
  HCNF_REQUIRE(!truth.empty(), "metrics: empty split");
  HCNF_REQUIRE(truth.size() == predicted.size(), "metrics: truth and prediction counts differ");
  Metrics m;
  m.total = truth.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    HCNF_REQUIRE(truth[i] >= 0 && truth[i] < kNumEmotions && predicted[i] >= 0 && predicted[i] < kNumEmotions,
                 "metrics: label out of range");
    ++m.confusion[truth[i]][predicted[i]];
    ++m.support[truth[i]];
    hits += truth[i] == predicted[i];
  }
  m.accuracy = double(hits) / double(m.total);
  for (int c = 0; c < kNumEmotions; ++c)
    m.recall[c] = m.support[c] ? double(m.confusion[c][c]) / double(m.support[c]) : std::nan("");
  return m;
}

json metrics_to_json(const Metrics& m) {
  json recall = json::object(), support = json::object();
  for (int c = 0; c < kNumEmotions; ++c) {
    const std::string name(emotion_name(static_cast<Emotion>(c)));
    recall[name] = std::isnan(m.recall[c]) ? json(nullptr) : json(m.recall[c]);
    support[name] = m.support[c];
  }
  json confusion = json::array();
  for (const auto& row : m.confusion) confusion.push_back(row);
  json labels = json::array();
  for (auto n : kEmotionNames) labels.push_back(std::string(n));
  return json{{"total", m.total},      {"accuracy", m.accuracy}, {"labels", labels},
              {"support", support},    {"recall", recall},       {"confusion", confusion}};
}

json epoch_to_json(const EpochStats& e) {
  return json{{"epoch", e.epoch},
              {"mean_loss", e.mean_loss},
              {"train_accuracy", e.train_accuracy},
              {"val_accuracy", e.val_accuracy ? json(*e.val_accuracy) : json(nullptr)},
              {"seconds", e.seconds}};
}

Classifier stream_classifier(nets::FusionModel<float>& model, Stream stream) {
  const bool residual = (stream == Stream::flow) != model.arch.swap_backbones;
  Classifier c;
  nets::StateDict<float> st;
  if (residual) {
    model.flow.collect(st, "flow");
    c.forward = [&model](Tape<float>& t, const Tensor<float>& x, nets::Mode mode) {
      return nets::flow_forward(t, model.flow, x, mode).logits;
    };
  } else {
    model.rgb.collect(st, "rgb");
    c.forward = [&model](Tape<float>& t, const Tensor<float>& x, nets::Mode mode) {
      return nets::rgb_forward(t, model.rgb, x, mode).logits;
    };
  }
  c.params = params_with_prefix(std::move(st));
  return c;
}

std::vector<int> labels_of(const std::vector<data::Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(static_cast<int>(s.label));
  return out;
}

std::vector<int> classify(Classifier& clf, const std::vector<data::Sample>& samples, int input_size, int batch_size) {
  data::BatchIterator it(std::max<std::size_t>(samples.size(), 1), std::size_t(batch_size), 0, false);
  std::vector<int> out;
  if (samples.empty()) return out;
  for (const auto& idx : it.epoch(0)) {
    const auto batch = data::make_batch(samples, idx, input_size);
    Tape<float> tape(false);
    const auto logits = clf.forward(tape, batch.images, nets::Mode::eval);
    for (std::size_t b = 0; b < idx.size(); ++b)
      out.push_back(argmax_row(logits.data().subspan(b * kNumEmotions, kNumEmotions)));
  }
  return out;
}

namespace {

double accuracy_of(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == pred[i];
  return truth.empty() ? 0.0 : double(hits) / double(truth.size());
}

// Shared epoch bookkeeping for both fit loops.
template <typename EpochFn, typename ValFn, typename TrainEvalFn>
FitResult run_epochs(const FitOptions& opts, bool has_val, EpochFn&& train_epoch, ValFn&& val_accuracy,
                     TrainEvalFn&& train_accuracy) {
  FitResult result;
  for (int e = 0; e < opts.epochs; ++e) {
    const auto t0 = Clock::now();
    EpochStats stats;
    stats.epoch = e + 1;
    train_epoch(e, stats);
    if (opts.eval_train_accuracy) stats.train_accuracy = train_accuracy();
    if (has_val) stats.val_accuracy = val_accuracy();
    stats.seconds = seconds_since(t0);
    result.epochs.push_back(stats);
    if (opts.on_epoch) opts.on_epoch(stats);
    const bool improved = !has_val || !result.best || *stats.val_accuracy > *result.best->val_accuracy;
    if (improved) {
      result.best = stats;
      if (opts.on_improved) opts.on_improved(stats);
    }
    if (opts.stop_at_train_accuracy && stats.train_accuracy >= *opts.stop_at_train_accuracy) break;
  }
  return result;
}

}  // namespace

FitResult fit_classifier(Classifier& clf, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                         int input_size, const FitOptions& opts) {
  HCNF_REQUIRE(!train.empty(), "fit: empty training set");
  HCNF_REQUIRE(opts.epochs >= 1 && opts.batch_size >= 1, "fit: epochs and batch_size must be positive");
  const data::BatchIterator batches(train.size(), std::size_t(opts.batch_size), opts.seed);
  const auto train_labels = labels_of(train), val_labels = labels_of(val);
  const std::span<Parameter<float>* const> params(clf.params);

  auto epoch_fn = [&](int e, EpochStats& stats) {
    double loss_sum = 0;
    std::size_t hits = 0, seen = 0, b = 0;
    for (const auto& idx : batches.epoch(std::size_t(e))) {
      const auto batch = data::make_batch(train, idx, input_size);
      Tape<float> tape;
      const auto logits = clf.forward(tape, batch.images, nets::Mode::train);
      auto ce = ops::softmax_cross_entropy(tape, logits, batch.targets);
      const double loss = ce.loss.item();
      check_loss(loss, e + 1, b++, opts.optimizer);
      zero_grad(params);
      tape.backward(ce.loss);
      optimizer_step(params, opts.optimizer);
      loss_sum += loss * double(idx.size());
      seen += idx.size();
      for (std::size_t i = 0; i < idx.size(); ++i)
        hits += argmax_row(ce.probs.data().subspan(i * kNumEmotions, kNumEmotions)) == batch.labels[i];
    }
    stats.mean_loss = loss_sum / double(seen);
    stats.train_accuracy = double(hits) / double(seen);
  };
  return run_epochs(
      opts, !val.empty(), epoch_fn,
      [&] { return accuracy_of(val_labels, classify(clf, val, input_size)); },
      [&] { return accuracy_of(train_labels, classify(clf, train, input_size)); });
}

SequenceInputs synth_sequence_inputs(const ImageF& still, int length, const PipelineConfig& cfg, std::uint64_t seed) {
  const int n = cfg.crop_size;
  ImageF base = still.channels() == 1 ? still : to_gray(still);
  if (base.width() != n || base.height() != n) base = resize_bilinear(base, n, n);
  const auto motion = data::synth_motion_sequence(base, length, cfg.train.motion_amplitude, seed);
  std::vector<ImageF> rgb, hsv;
  rgb.reserve(std::size_t(length));
  hsv.reserve(std::size_t(length));
  for (std::size_t i = 0; i < motion.sequence.size(); ++i) {
    rgb.push_back(to_float(motion.sequence.frames[i]));
    hsv.push_back(i == 0 ? zero_flow_hsv(n, cfg.flow) : flow_hsv(rgb[i - 1], rgb[i], cfg.flow));
  }
  return {stack_frames(rgb, 0, rgb.size()), stack_frames(hsv, 0, hsv.size())};
}

std::vector<data::Sample> make_flow_samples(const std::vector<data::Sample>& stills, const PipelineConfig& cfg,
                                            std::uint64_t seed) {
  const int n = cfg.crop_size;
  std::vector<data::Sample> out;
  out.reserve(stills.size());
  for (std::size_t i = 0; i < stills.size(); ++i) {
    const auto& s = stills[i];
    ImageF base = s.image.channels() == 1 ? s.image : to_gray(s.image);
    if (base.width() != n || base.height() != n) base = resize_bilinear(base, n, n);
    const auto motion = data::synth_motion_sequence(base, 2, cfg.train.motion_amplitude, seed + i);
    out.push_back({flow_hsv(to_float(motion.sequence.frames[0]), to_float(motion.sequence.frames[1]), cfg.flow),
                   s.label, s.source, s.split});
  }
  return out;
}

namespace {

Tensor<float> frozen_features(nets::FusionModel<float>& model, const SequenceInputs& in) {
  Tape<float> tape(false);
  return nets::fusion_features(tape, model, in.rgb, in.hsv, nets::Mode::eval).detach();
}

Tensor<float> head_logits(Tape<float>& tape, nets::FusionModel<float>& model, const Tensor<float>& features) {
  auto seq = nets::lstm_sequence(tape, model.lstm, features, nets::LstmState<float>::zeros(1));
  return model.lstm.classifier(tape, seq.outputs.back());
}

}  // namespace

std::vector<int> classify_fusion(nets::FusionModel<float>& model, const std::vector<data::Sample>& stills,
                                 const PipelineConfig& cfg, std::uint64_t seed) {
  std::vector<int> out;
  out.reserve(stills.size());
  for (std::size_t i = 0; i < stills.size(); ++i) {
    const auto in = synth_sequence_inputs(stills[i].image, cfg.group_size, cfg, seed + i);
    Tape<float> tape(false);
    const auto r = nets::fusion_forward(tape, model, in.rgb, in.hsv, nets::LstmState<float>::zeros(1),
                                        nets::Mode::eval);
    out.push_back(argmax_row(r.logits.data()));
  }
  return out;
}

FitResult fit_fusion(nets::FusionModel<float>& model, const std::vector<data::Sample>& train_stills,
                     const std::vector<data::Sample>& val_stills, const PipelineConfig& cfg, const FitOptions& opts) {
  HCNF_REQUIRE(!train_stills.empty(), "fit_fusion: empty training set");
  HCNF_REQUIRE(model.arch.input_size == cfg.crop_size && model.arch.group_size == cfg.group_size,
               "fit_fusion: model and config disagree on crop or group size");
  const bool frozen = !cfg.train.fine_tune_backbones;
  const std::uint64_t train_seed = derive_seed(cfg.seed, kSequences);
  const std::uint64_t val_seed = derive_seed(cfg.seed, kSequences + 100);

  std::vector<Parameter<float>*> params;
  if (frozen) {
    nets::StateDict<float> st;
    model.lstm.collect(st, "lstm");
    params = nets::parameters_of(st);
  } else {
    params = model.parameters();
  }
  const std::span<Parameter<float>* const> pspan(params);

  std::vector<Tensor<float>> features;
  if (frozen)
    for (std::size_t i = 0; i < train_stills.size(); ++i)
      features.push_back(
          frozen_features(model, synth_sequence_inputs(train_stills[i].image, cfg.group_size, cfg, train_seed + i)));

  const data::BatchIterator batches(train_stills.size(), std::size_t(opts.batch_size), opts.seed);
  const auto train_labels = labels_of(train_stills), val_labels = labels_of(val_stills);

  auto epoch_fn = [&](int e, EpochStats& stats) {
    double loss_sum = 0;
    std::size_t hits = 0, seen = 0, b = 0;
    for (const auto& idx : batches.epoch(std::size_t(e))) {
      zero_grad(pspan);
      double batch_loss = 0;
      for (std::size_t i : idx) {
        Tape<float> tape;
        Tensor<float> feats;
        if (frozen) {
          feats = features[i];
        } else {
          const auto in = synth_sequence_inputs(train_stills[i].image, cfg.group_size, cfg, train_seed + i);
          feats = nets::fusion_features(tape, model, in.rgb, in.hsv, nets::Mode::train);
        }
        const auto logits = head_logits(tape, model, feats);
        auto ce = ops::softmax_cross_entropy(tape, logits, one_hot(train_labels[i]));
        auto loss = ops::scale(tape, ce.loss, 1.0f / float(idx.size()));
        tape.backward(loss);
        batch_loss += ce.loss.item();
        hits += argmax_row(ce.probs.data()) == train_labels[i];
      }
      check_loss(batch_loss, e + 1, b++, opts.optimizer);
      optimizer_step(pspan, opts.optimizer);
      loss_sum += batch_loss;
      seen += idx.size();
    }
    stats.mean_loss = loss_sum / double(seen);
    stats.train_accuracy = double(hits) / double(seen);
  };
  return run_epochs(
      opts, !val_stills.empty(), epoch_fn,
      [&] { return accuracy_of(val_labels, classify_fusion(model, val_stills, cfg, val_seed)); },
      [&] { return accuracy_of(train_labels, classify_fusion(model, train_stills, cfg, train_seed)); });
}

Datasets load_datasets(const PipelineConfig& cfg) {
  Datasets d;
  const auto& tr = cfg.train;
  if (tr.dataset == DatasetKind::fer2013) {
    require_existing(cfg.paths.data, "FER-2013 CSV");
    data::FerOptions fo;
    fo.strict = cfg.strict;
    auto fer = data::load_fer2013_csv(cfg.paths.data, fo);
    for (auto& s : fer.samples) {
      auto& dst = s.split == data::Split::train ? d.train : s.split == data::Split::val ? d.val : d.test;
      dst.push_back(std::move(s));
    }
    d.fingerprints.push_back({{"name", "fer2013"},
                              {"path", cfg.paths.data.string()},
                              {"rows", fer.rows},
                              {"skipped", fer.skipped},
                              {"crc32", file_crc(cfg.paths.data)}});
    if (!cfg.paths.kdef.empty()) {
      require_existing(cfg.paths.kdef, "KDEF directory");
      auto kdef = data::load_kdef_dir(cfg.paths.kdef, cfg.crop_size);
      d.fingerprints.push_back({{"name", "kdef"},
                                {"path", cfg.paths.kdef.string()},
                                {"images", kdef.samples.size()},
                                {"ignored", kdef.ignored},
                                {"crc32", samples_crc(kdef.samples)}});
      for (auto& s : kdef.samples) d.train.push_back(std::move(s));
    }
  } else {
    std::vector<Emotion> classes = tr.classes;
    if (classes.empty())
      for (int e = 0; e < kNumEmotions; ++e) classes.push_back(static_cast<Emotion>(e));
    const std::size_t per = tr.synthetic_per_class;
    d.train = data::synthetic_face_dataset(classes, per, cfg.crop_size, derive_seed(cfg.seed, kSynthTrain),
                                           data::Split::train);
    d.val = data::synthetic_face_dataset(classes, per, cfg.crop_size, derive_seed(cfg.seed, kSynthVal),
                                         data::Split::val);
    d.test = data::synthetic_face_dataset(classes, per, cfg.crop_size, derive_seed(cfg.seed, kSynthTest),
                                          data::Split::test);
    d.fingerprints.push_back({{"name", "synthetic"},
                              {"per_class", per},
                              {"crc32", samples_crc(d.train) + "/" + samples_crc(d.val) + "/" + samples_crc(d.test)}});
  }
  d.train = restrict_classes(std::move(d.train), tr.classes, tr.train_per_class, derive_seed(cfg.seed, kCapTrain));
  d.val = restrict_classes(std::move(d.val), tr.classes, tr.val_per_class, derive_seed(cfg.seed, kCapVal));
  d.test = restrict_classes(std::move(d.test), tr.classes, tr.val_per_class, derive_seed(cfg.seed, kCapTest));
  return d;
}

void write_json_atomically(const json& j, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

TrainReport run_train(const PipelineConfig& cfg, Stage stage, std::ostream& log) {
  cfg.validate();
  if (cfg.paths.checkpoint.empty()) throw IoError("checkpoint output path is not set");
  const auto t_start = Clock::now();

  auto model = initial_model(cfg);
  const auto data = load_datasets(cfg);
  const double load_seconds = seconds_since(t_start);
  HCNF_REQUIRE(!data.train.empty(), "training split is empty after class filtering");
  log << "stage " << stage_name(stage) << ": " << data.train.size() << " train / " << data.val.size()
      << " val samples\n";

  FitOptions opts;
  opts.epochs = cfg.train.epochs;
  opts.batch_size = cfg.train.batch_size;
  opts.optimizer = cfg.train.optimizer;
  opts.seed = derive_seed(cfg.seed, kBatches);
  opts.on_epoch = [&](const EpochStats& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f train_acc %.4f", e.epoch, e.mean_loss, e.train_accuracy);
    log << line;
    if (e.val_accuracy) {
      std::snprintf(line, sizeof line, " val_acc %.4f", *e.val_accuracy);
      log << line;
    }
    std::snprintf(line, sizeof line, " (%.1fs)\n", e.seconds);
    log << line << std::flush;
  };
  opts.on_improved = [&](const EpochStats&) { nets::checkpoint_save(model, cfg.paths.checkpoint); };

  const auto t_train = Clock::now();
  FitResult fit;
  switch (stage) {
    case Stage::pretrain_rgb: {
      auto clf = stream_classifier(model, Stream::rgb);
      fit = fit_classifier(clf, data.train, data.val, cfg.crop_size, opts);
      break;
    }
    case Stage::pretrain_flow: {
      const auto train = make_flow_samples(data.train, cfg, derive_seed(cfg.seed, kFlowPairs));
      const auto val = make_flow_samples(data.val, cfg, derive_seed(cfg.seed, kFlowPairs + 100));
      auto clf = stream_classifier(model, Stream::flow);
      fit = fit_classifier(clf, train, val, cfg.crop_size, opts);
      break;
    }
    case Stage::train_fusion:
      fit = fit_fusion(model, data.train, data.val, cfg, opts);
      break;
  }
  const double train_seconds = seconds_since(t_train);

  json epochs = json::array();
  for (const auto& e : fit.epochs) epochs.push_back(epoch_to_json(e));
  TrainReport report;
  report.fit = fit;
  report.manifest = json{
      {"stage", std::string(stage_name(stage))},
      {"seed", cfg.seed},
      {"config", config_to_json(cfg)},
      {"datasets", data.fingerprints},
      {"class_counts", {{"train", counts_json(data.train)}, {"val", counts_json(data.val)}}},
      {"epochs", epochs},
      {"best", fit.best ? epoch_to_json(*fit.best) : json(nullptr)},
      {"checkpoint", cfg.paths.checkpoint.string()},
      {"timings",
       {{"load_seconds", load_seconds},
        {"train_seconds", train_seconds},
        {"total_seconds", seconds_since(t_start)}}},
  };
  auto manifest_path = cfg.paths.manifest;
  if (manifest_path.empty()) {
    manifest_path = cfg.paths.checkpoint;
    manifest_path += ".manifest.json";
  }
  write_json_atomically(report.manifest, manifest_path);
  return report;
}

Metrics run_eval(const PipelineConfig& cfg_in, Stage stage, data::Split split) {
  require_existing(cfg_in.paths.checkpoint, "checkpoint");
  auto model = nets::checkpoint_load(cfg_in.paths.checkpoint);
  PipelineConfig cfg = cfg_in;
  cfg.crop_size = model.arch.input_size;
  cfg.group_size = model.arch.group_size;
  cfg.width = model.arch.width;
  cfg.swap_backbones = model.arch.swap_backbones;
  const auto data = load_datasets(cfg);
  const auto& samples = split == data::Split::train ? data.train : split == data::Split::val ? data.val : data.test;
  HCNF_REQUIRE(!samples.empty(), "eval: split '" + std::string(data::split_name(split)) + "' is empty");

  std::vector<int> pred;
  switch (stage) {
    case Stage::pretrain_rgb: {
      auto clf = stream_classifier(model, Stream::rgb);
      pred = classify(clf, samples, cfg.crop_size);
      break;
    }
    case Stage::pretrain_flow: {
      auto clf = stream_classifier(model, Stream::flow);
      pred = classify(clf, make_flow_samples(samples, cfg, derive_seed(cfg.seed, kFlowPairs + 200 + split_tag(split))),
                      cfg.crop_size);
      break;
    }
    case Stage::train_fusion:
      pred = classify_fusion(model, samples, cfg, derive_seed(cfg.seed, kSequences + 200 + split_tag(split)));
      break;
  }
  return compute_metrics(labels_of(samples), pred);
}

}  // namespace hcnf::pipeline

#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "hcnf/data/sample.hpp"
#include "hcnf/nets/models.hpp"
#include "hcnf/pipeline/config.hpp"

namespace hcnf::pipeline {

enum class Stage { pretrain_rgb, pretrain_flow, train_fusion };
std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

// A non-finite loss; the message carries the epoch, batch and learning rate.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Metrics {
  std::size_t total = 0;
  double accuracy = 0;
  std::array<std::size_t, kNumEmotions> support{};
  std::array<double, kNumEmotions> recall{};  // NaN for classes without samples
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> confusion{};  // [true][predicted]
};

// Empty input is a ContractError.
Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted);
nlohmann::json metrics_to_json(const Metrics& m);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double train_accuracy = 0;
  std::optional<double> val_accuracy;
  double seconds = 0;
};
nlohmann::json epoch_to_json(const EpochStats& e);

// Per-frame classifier over [B,3,n,n] inputs producing [B,8] logits.
struct Classifier {
  std::function<Tensor<float>(Tape<float>&, const Tensor<float>&, nets::Mode)> forward;
  std::vector<Parameter<float>*> params;
};

enum class Stream { rgb, flow };

// The backbone serving `stream` (the residual net serves RGB when the model
// swaps backbones) together with its pretraining head.
Classifier stream_classifier(nets::FusionModel<float>& model, Stream stream);

struct FitOptions {
  int epochs = 1;
  int batch_size = 32;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 1;
  // Report train accuracy from an eval-mode pass over the training set after
  // each epoch instead of the running train-mode accuracy.
  bool eval_train_accuracy = false;
  std::optional<double> stop_at_train_accuracy;
  std::function<void(const EpochStats&)> on_epoch;
  // Called after an epoch that improves validation accuracy, or after every
  // epoch when there is no validation set.
  std::function<void(const EpochStats&)> on_improved;
};

struct FitResult {
  std::vector<EpochStats> epochs;
  std::optional<EpochStats> best;
};

FitResult fit_classifier(Classifier& clf, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                         int input_size, const FitOptions& opts);

std::vector<int> classify(Classifier& clf, const std::vector<data::Sample>& samples, int input_size,
                          int batch_size = 64);
std::vector<int> labels_of(const std::vector<data::Sample>& samples);

// Stills resized to n x n gray, jittered by synth_motion_sequence; sample i
// uses seed + i.
struct SequenceInputs {
  Tensor<float> rgb, hsv;  // [length,3,n,n]
};
SequenceInputs synth_sequence_inputs(const ImageF& still, int length, const PipelineConfig& cfg,
                                     std::uint64_t seed);

// Flow-stream training samples: HSV flow between the two frames of a jittered
// pair made from each still, labelled like the still.
std::vector<data::Sample> make_flow_samples(const std::vector<data::Sample>& stills, const PipelineConfig& cfg,
                                            std::uint64_t seed);

// Fusion-head training on synthetic sequences. With frozen backbones the
// per-window features are computed once in eval mode and only the LSTM
// learns; otherwise every parameter is updated.
FitResult fit_fusion(nets::FusionModel<float>& model, const std::vector<data::Sample>& train_stills,
                     const std::vector<data::Sample>& val_stills, const PipelineConfig& cfg, const FitOptions& opts);
std::vector<int> classify_fusion(nets::FusionModel<float>& model, const std::vector<data::Sample>& stills,
                                 const PipelineConfig& cfg, std::uint64_t seed);

struct Datasets {
  std::vector<data::Sample> train, val, test;
  nlohmann::json fingerprints = nlohmann::json::array();
};

// FER-2013 (Training / PublicTest / PrivateTest usages, plus KDEF stills in
// train when configured) or the synthetic faces, filtered to train.classes
// and capped per class.
Datasets load_datasets(const PipelineConfig& cfg);

struct TrainReport {
  FitResult fit;
  nlohmann::json manifest;
};

// Trains one stage, keeps the best-validation checkpoint at
// paths.checkpoint and writes the run manifest beside it. Progress lines go
// to `log`.
TrainReport run_train(const PipelineConfig& cfg, Stage stage, std::ostream& log);

// Scores the checkpoint on one split; `stage` picks the evaluated network.
Metrics run_eval(const PipelineConfig& cfg, Stage stage, data::Split split);

// Written to a temporary sibling and renamed into place.
void write_json_atomically(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace hcnf::pipeline

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcnf/core/emotion.hpp"
#include "hcnf/detect/detector.hpp"
#include "hcnf/flow/farneback.hpp"
#include "hcnf/nets/models.hpp"
#include "hcnf/tensor/optimizer.hpp"

namespace hcnf::pipeline {

// What happens to the last group_size-incomplete run of frames: repeat-last
// pads it to a full group when it holds at least kMinTailFrames frames and
// drops it otherwise; drop-short always drops it.
enum class PadPolicy { repeat_last, drop_short };
inline constexpr int kMinTailFrames = 5;

std::string_view pad_policy_name(PadPolicy p);

struct PipelinePaths {
  std::filesystem::path cascade;
  std::filesystem::path checkpoint;       // model read by predict/eval, written by train
  std::filesystem::path init_checkpoint;  // optional starting point for train
  std::filesystem::path data;             // FER-2013 CSV
  std::filesystem::path kdef;             // optional KDEF image directory
  std::filesystem::path manifest;         // defaults to <checkpoint>.manifest.json
};

enum class DatasetKind { fer2013, synthetic };

struct TrainSettings {
  DatasetKind dataset = DatasetKind::fer2013;
  int epochs = 20;
  int batch_size = 32;
  OptimizerConfig optimizer{};
  bool fine_tune_backbones = false;  // train-fusion only
  // Empty means every class the dataset provides.
  std::vector<Emotion> classes;
  // Balanced per-class caps on the train and validation sets; 0 keeps all.
  std::size_t train_per_class = 0;
  std::size_t val_per_class = 0;
  std::size_t synthetic_per_class = 64;  // synthetic dataset size per class and split
  double motion_amplitude = 2.0;         // px, synthetic sequences for flow and fusion
};

struct PipelineConfig {
  int crop_size = 48;
  int group_size = 30;
  int fps = 3;
  int width = 16;  // backbone base width
  flow::FlowParams flow{};
  detect::DetectParams detector{};
  bool swap_backbones = false;
  PadPolicy pad_policy = PadPolicy::repeat_last;
  std::uint64_t seed = 1;
  int threads = 1;
  bool strict = true;
  PipelinePaths paths;
  TrainSettings train;

  // ParseError with where() naming the offending key.
  void validate() const;
  nets::ArchConfig arch() const;
};

// Keys absent from the JSON keep their defaults; unknown keys and type
// mismatches are ParseErrors naming the dotted key path.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

// IoError unless `path` names an existing file or directory.
void require_existing(const std::filesystem::path& path, std::string_view what);

}  // namespace hcnf::pipeline

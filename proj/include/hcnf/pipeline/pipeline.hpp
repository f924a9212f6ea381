#pragma once

#include <ostream>
#include <vector>

#include "hcnf/data/video.hpp"
#include "hcnf/detect/cascade.hpp"
#include "hcnf/nets/models.hpp"
#include "hcnf/pipeline/config.hpp"

namespace hcnf::pipeline {

// Frames [start, end] of the sequence feed one window; `padded` copies of
// frame `end` fill it up to group_size.
struct WindowSpan {
  int start = 0, end = 0;
  int padded = 0;
  bool operator==(const WindowSpan&) const = default;
};

std::vector<WindowSpan> plan_windows(std::size_t frame_count, int group_size, PadPolicy policy);

// HSV encoding of the flow from `prev` to `next`, two n x n crops in [0,1].
// Flow runs on their gray versions rescaled to 0..255.
ImageF flow_hsv(const ImageF& prev, const ImageF& next, const flow::FlowParams& params);

// Displayable RGB of a flow encoding, all channels in [0,1].
ImageF hsv_to_rgb(const ImageF& hsv);

// Frame 0 has no predecessor; its stream input is the encoding of zero flow.
ImageF zero_flow_hsv(int n, const flow::FlowParams& params);

// Per-frame network inputs: face crops and the flow encoding against the
// previous crop.
struct PreparedFrames {
  std::vector<ImageF> crops;
  std::vector<ImageF> hsv;
  std::vector<detect::CropSource> sources;
  std::size_t size() const { return crops.size(); }
};

PreparedFrames prepare_frames(const data::FrameSequence& seq, const detect::Cascade& cascade,
                              const PipelineConfig& cfg);

// Stacks frames [first, first + count) into [count,3,n,n], repeating the last
// available frame past the end.
Tensor<float> stack_frames(const std::vector<ImageF>& frames, std::size_t first, std::size_t count);

// One prediction per planned window; the LSTM state starts at zero and is
// carried from window to window.
std::vector<nets::WindowPrediction> predict_windows(nets::FusionModel<float>& model, const PreparedFrames& frames,
                                                    const PipelineConfig& cfg);

struct StageTimings {
  double prepare_seconds = 0;
  double predict_seconds = 0;
};

// Empty sequences are ContractErrors. A frame without detections is cropped
// through the tracker / centre fallback.
std::vector<nets::WindowPrediction> process_video(const data::FrameSequence& seq, nets::FusionModel<float>& model,
                                                  const detect::Cascade& cascade, const PipelineConfig& cfg,
                                                  StageTimings* timings = nullptr);

// {"window":j,"start_frame":s,"end_frame":e,"probs":[8 x %.6f],"label":"name"}
std::string prediction_json_line(const nets::WindowPrediction& p);

// One line per prediction, flushed after each. A failing sink is an IoError
// reporting how many lines made it out.
void emit_predictions(const std::vector<nets::WindowPrediction>& preds, std::ostream& sink);

}  // namespace hcnf::pipeline

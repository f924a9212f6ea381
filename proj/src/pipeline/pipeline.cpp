#include "hcnf/pipeline/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "hcnf/core/error.hpp"
#include "hcnf/detect/detector.hpp"
#include "hcnf/flow/farneback.hpp"

namespace hcnf::pipeline {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ImageF gray_255(const ImageF& crop) {
  ImageF g = crop.channels() == 1 ? crop : to_gray(crop);
  for (auto& v : g.pixels()) v *= 255.0f;
  return g;
}

}  // namespace

std::vector<WindowSpan> plan_windows(std::size_t frame_count, int group_size, PadPolicy policy) {
  HCNF_REQUIRE(group_size >= 1, "plan_windows: group_size must be >= 1");
  const auto g = static_cast<std::size_t>(group_size);
  std::vector<WindowSpan> out;
  std::size_t start = 0;
  for (; start + g <= frame_count; start += g)
    out.push_back({static_cast<int>(start), static_cast<int>(start + g - 1), 0});
  const std::size_t tail = frame_count - start;
  // A tail can only be short of a full group, so a tiny group never pads.
  if (policy == PadPolicy::repeat_last && tail >= static_cast<std::size_t>(kMinTailFrames))
    out.push_back({static_cast<int>(start), static_cast<int>(frame_count - 1), static_cast<int>(g - tail)});
  return out;
}

ImageF flow_hsv(const ImageF& prev, const ImageF& next, const flow::FlowParams& params) {
  const auto f = flow::farneback_flow(gray_255(prev), gray_255(next), params);
  return flow::flow_to_hsv(f, params.magnitude_clip);
}

ImageF zero_flow_hsv(int n, const flow::FlowParams& params) {
  return flow::flow_to_hsv(flow::FlowField(n, n), params.magnitude_clip);
}

ImageF hsv_to_rgb(const ImageF& hsv) {
  HCNF_REQUIRE(hsv.channels() == 3, "hsv_to_rgb: expected 3 channels");
  ImageF out(hsv.width(), hsv.height(), 3);
  for (int y = 0; y < hsv.height(); ++y)
    for (int x = 0; x < hsv.width(); ++x) {
      const float h = hsv.at(x, y, 0) * 6.0f, s = hsv.at(x, y, 1), v = hsv.at(x, y, 2);
      const int sector = static_cast<int>(h) % 6;
      const float f = h - std::floor(h);
      const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
      const float rgb[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[sector][c];
    }
  return out;
}

PreparedFrames prepare_frames(const data::FrameSequence& seq, const detect::Cascade& cascade,
                              const PipelineConfig& cfg) {
  HCNF_REQUIRE(!seq.frames.empty(), "process_video: empty frame sequence");
  const int n = cfg.crop_size;
  PreparedFrames out;
  out.crops.reserve(seq.size());
  out.hsv.reserve(seq.size());
  detect::FaceTracker tracker;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& frame = seq.frames[i];
    const auto dets = detect::detect_faces(to_gray(frame), cascade, cfg.detector);
    detect::CropSource source{};
    out.crops.push_back(detect::crop_face(frame, dets, tracker, n, &source));
    out.sources.push_back(source);
    out.hsv.push_back(i == 0 ? zero_flow_hsv(n, cfg.flow) : flow_hsv(out.crops[i - 1], out.crops[i], cfg.flow));
  }
  return out;
}

Tensor<float> stack_frames(const std::vector<ImageF>& frames, std::size_t first, std::size_t count) {
  HCNF_REQUIRE(first < frames.size(), "stack_frames: first frame out of range");
  const auto& ref = frames[first];
  const std::size_t C = 3, H = ref.height(), W = ref.width(), plane = H * W;
  Tensor<float> out(Shape{count, C, H, W});
  for (std::size_t k = 0; k < count; ++k) {
    const auto& img = frames[std::min(first + k, frames.size() - 1)];
    HCNF_REQUIRE(img.width() == int(W) && img.height() == int(H), "stack_frames: frame sizes differ");
    const int channels = img.channels();
    HCNF_REQUIRE(channels == 1 || channels == 3, "stack_frames: frames must have 1 or 3 channels");
    float* dst = out.ptr() + k * C * plane;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          dst[c * plane + y * W + x] = img.at(int(x), int(y), channels == 1 ? 0 : int(c));
  }
  return out;
}

std::vector<nets::WindowPrediction> predict_windows(nets::FusionModel<float>& model, const PreparedFrames& frames,
                                                    const PipelineConfig& cfg) {
  HCNF_REQUIRE(model.arch.input_size == cfg.crop_size && model.arch.group_size == cfg.group_size,
               "model expects " + std::to_string(model.arch.input_size) + "px crops in groups of " +
                   std::to_string(model.arch.group_size) + ", config has " + std::to_string(cfg.crop_size) +
                   "px / " + std::to_string(cfg.group_size));
  const auto g = static_cast<std::size_t>(cfg.group_size);
  std::vector<nets::WindowPrediction> out;
  auto state = nets::LstmState<float>::zeros(1);
  int index = 0;
  for (const auto& span : plan_windows(frames.size(), cfg.group_size, cfg.pad_policy)) {
    // Stacking stops at span.end, so padded slots repeat the last real frame.
    std::vector<ImageF> rgb(frames.crops.begin() + span.start, frames.crops.begin() + span.end + 1);
    std::vector<ImageF> hsv(frames.hsv.begin() + span.start, frames.hsv.begin() + span.end + 1);
    Tape<float> tape(false);
    auto r = nets::fusion_forward(tape, model, stack_frames(rgb, 0, g), stack_frames(hsv, 0, g), state,
                                  nets::Mode::eval);
    std::vector<double> probs(r.probs.data().begin(), r.probs.data().end());
    out.push_back(nets::make_window_prediction(index++, span.start, span.end, probs));
    state = std::move(r.state);
  }
  return out;
}

std::vector<nets::WindowPrediction> process_video(const data::FrameSequence& seq, nets::FusionModel<float>& model,
                                                  const detect::Cascade& cascade, const PipelineConfig& cfg,
                                                  StageTimings* timings) {
  auto t0 = std::chrono::steady_clock::now();
  const auto frames = prepare_frames(seq, cascade, cfg);
  const double prepare = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  auto preds = predict_windows(model, frames, cfg);
  if (timings) {
    timings->prepare_seconds = prepare;
    timings->predict_seconds = seconds_since(t0);
  }
  return preds;
}

std::string prediction_json_line(const nets::WindowPrediction& p) {
  std::string s = "{\"window\":" + std::to_string(p.window_index) + ",\"start_frame\":" +
                  std::to_string(p.start_frame) + ",\"end_frame\":" + std::to_string(p.end_frame) + ",\"probs\":[";
  char buf[32];
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", p.probs[i]);
    if (i) s += ',';
    s += buf;
  }
  s += "],\"label\":\"";
  s += emotion_name(p.label);
  s += "\"}";
  return s;
}

void emit_predictions(const std::vector<nets::WindowPrediction>& preds, std::ostream& sink) {
  std::size_t written = 0;
  for (const auto& p : preds) {
    sink << prediction_json_line(p) << '\n';
    sink.flush();
    if (!sink)
      throw IoError("prediction sink failed after " + std::to_string(written) + " of " +
                    std::to_string(preds.size()) + " lines");
    ++written;
  }
}

}  // namespace hcnf::pipeline

#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace hcnf {

// Ordinal order is fixed: checkpoints, JSONL output and confusion matrices
// all index classes by these values.
enum class Emotion : int {
  anger = 0,
  disgust = 1,
  fear = 2,
  happiness = 3,
  sadness = 4,
  surprise = 5,
  contempt = 6,
  neutral = 7,
};

inline constexpr int kNumEmotions = 8;

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "anger", "disgust", "fear", "happiness", "sadness", "surprise", "contempt", "neutral"};

inline constexpr std::string_view emotion_name(Emotion e) { return kEmotionNames[static_cast<int>(e)]; }

inline std::optional<Emotion> parse_emotion(std::string_view s) {
  for (int i = 0; i < kNumEmotions; ++i)
    if (kEmotionNames[i] == s) return static_cast<Emotion>(i);
  return std::nullopt;
}

}  // namespace hcnf

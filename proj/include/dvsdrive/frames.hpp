#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvsdrive/recording.hpp"

namespace dvsdrive {

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Signed event counts: ON adds +1, OFF adds -1.
struct DvsHistogram {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> bins;

  std::int32_t at(int x, int y) const { return bins[static_cast<std::size_t>(y) * width + x]; }
};

/// Real values in [0, 1], row-major.
struct NormalizedImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr int kSensorWidth = 346;
inline constexpr int kSensorHeight = 260;
inline constexpr int kNetWidth = 172;
inline constexpr int kNetHeight = 128;
inline constexpr int kCropX = (kSensorWidth - 2 * kNetWidth) / 2;   // 1
inline constexpr int kCropY = (kSensorHeight - 2 * kNetHeight) / 2;  // 2
inline constexpr double kClipSigmas = 3.0;
inline constexpr double kApsNormalizer = 1023.0;

DvsHistogram accumulate_dvs(std::span<const Event> events, int width, int height);

/// Clips bins to +-3 sigma (population sigma of this histogram, all pixels)
/// and maps -3 sigma -> 0, 0 -> 0.5, +3 sigma -> 1. Uniform 0.5 when sigma is 0.
NormalizedImage normalize_dvs(const DvsHistogram& hist);

/// Divides by the 10-bit full scale and clips to [0, 1].
NormalizedImage normalize_aps(const ApsFrame& frame);

/// 346x260 -> 172x128: center crop to 344x256, then 2x2 mean pooling.
NormalizedImage downsample(const NormalizedImage& img);

/// Binary PGM (P5, maxval 255), pixel = round(v * 255).
std::string encode_pgm(const NormalizedImage& img);
void write_pgm(const NormalizedImage& img, const std::string& path);

}  // namespace dvsdrive

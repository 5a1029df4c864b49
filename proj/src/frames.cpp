#include "dvsdrive/frames.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dvsdrive {

DvsHistogram accumulate_dvs(std::span<const Event> events, int width, int height) {
  if (width <= 0 || height <= 0) throw FrameError("histogram size must be positive");
  DvsHistogram h{width, height, std::vector<std::int32_t>(static_cast<std::size_t>(width) * height)};
  std::int32_t* bins = h.bins.data();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height) {
      throw FrameError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                       std::to_string(e.y) + ") outside " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    bins[static_cast<std::size_t>(e.y) * width + e.x] += e.polarity;
  }
  return h;
}

NormalizedImage normalize_dvs(const DvsHistogram& hist) {
  const std::size_t n = hist.bins.size();
  NormalizedImage out{hist.width, hist.height, std::vector<double>(n, 0.5)};
  if (n == 0) return out;

  double sum = 0.0;
  for (const auto b : hist.bins) sum += b;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto b : hist.bins) ss += (b - mean) * (b - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(n));
  if (sigma == 0.0) return out;

  const double limit = kClipSigmas * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    const double clipped = std::clamp(static_cast<double>(hist.bins[i]), -limit, limit);
    const double half = 0.5 * std::abs(clipped) / limit;
    // Negative side is computed as 1 - (0.5 + half), which is exact, so that
    // negating the histogram maps v to exactly 1 - v.
    out.values[i] = clipped >= 0.0 ? 0.5 + half : 1.0 - (0.5 + half);
  }
  return out;
}

NormalizedImage normalize_aps(const ApsFrame& frame) {
  NormalizedImage out{frame.width, frame.height, std::vector<double>(frame.pixels.size())};
  std::transform(frame.pixels.begin(), frame.pixels.end(), out.values.begin(),
                 [](std::uint16_t v) { return std::min(1.0, v / kApsNormalizer); });
  return out;
}

NormalizedImage downsample(const NormalizedImage& img) {
  if (img.width != kSensorWidth || img.height != kSensorHeight ||
      img.values.size() != static_cast<std::size_t>(kSensorWidth) * kSensorHeight) {
    throw FrameError("downsample expects " + std::to_string(kSensorWidth) + "x" +
                     std::to_string(kSensorHeight) + ", got " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  }
  NormalizedImage out{kNetWidth, kNetHeight,
                      std::vector<double>(static_cast<std::size_t>(kNetWidth) * kNetHeight)};
  for (int j = 0; j < kNetHeight; ++j) {
    const double* r0 = img.values.data() + static_cast<std::size_t>(kCropY + 2 * j) * kSensorWidth;
    const double* r1 = r0 + kSensorWidth;
    double* dst = out.values.data() + static_cast<std::size_t>(j) * kNetWidth;
    for (int i = 0; i < kNetWidth; ++i) {
      const int x = kCropX + 2 * i;
      dst[i] = ((r0[x] + r0[x + 1]) + (r1[x] + r1[x + 1])) * 0.25;
    }
  }
  return out;
}

std::string encode_pgm(const NormalizedImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.values.size());
  for (const double v : img.values) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  return out;
}

void write_pgm(const NormalizedImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FrameError("cannot write " + path);
}

}  // namespace dvsdrive

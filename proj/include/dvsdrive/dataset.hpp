// Training-set preparation: temporal split, speed/outlier filtering,
// straight-driving rebalancing, and the DDSM sample file.
//
// DDSM layout (little-endian):
//   header (16 B): "DDSM" | version u16 (=1) | count u32 | 6 reserved zero bytes
//   record       : steering f32 | speed f32 | dvs 172x128 f32 | aps 172x128 f32
// A sidecar "<file>.index" CSV (recording_id,window_end_ms) keeps provenance
// per record, and "<file>.manifest" holds key=value metadata.
#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvsdrive/frames.hpp"
#include "dvsdrive/keyvalue.hpp"
#include "dvsdrive/random.hpp"
#include "dvsdrive/sync.hpp"

namespace dvsdrive {

inline constexpr double kMinSpeedKmh = 15.0;
inline constexpr double kSteeringClipSigmas = 3.0;
inline constexpr double kStraightBandDeg = 5.0;
inline constexpr double kStraightDropProbability = 0.7;

inline constexpr std::array<char, 4> kDatasetMagic = {'D', 'D', 'S', 'M'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 16;
inline constexpr std::size_t kImagePixels = static_cast<std::size_t>(kNetWidth) * kNetHeight;
inline constexpr std::size_t kDatasetRecordBytes = 4 + 4 + 2 * kImagePixels * 4;

struct LabeledSample {
  std::vector<float> dvs;  // kNetWidth x kNetHeight, values in [0, 1]
  std::vector<float> aps;
  float steering_deg = 0.0f;
  float speed_kmh = 0.0f;
  std::string recording_id;
  std::uint64_t window_end_ms = 0;

  bool operator==(const LabeledSample&) const = default;
};

/// Label part of a sample, enough to decide splitting and filtering.
struct SampleLabel {
  std::string recording_id;
  std::uint64_t window_index = 0;
  std::uint64_t window_end_ms = 0;
  float steering_deg = 0.0f;
  float speed_kmh = 0.0f;
};

template <typename T>
concept Labeled = requires(const T& s) {
  { s.steering_deg } -> std::convertible_to<double>;
  { s.speed_kmh } -> std::convertible_to<double>;
  { s.window_end_ms } -> std::convertible_to<std::uint64_t>;
};

struct PrepStats {
  std::string split;
  double steering_sigma = 0.0;
  std::uint64_t input = 0;
  std::uint64_t dropped_speed = 0;
  std::uint64_t dropped_steering = 0;
  std::uint64_t dropped_rebalance = 0;
  std::uint64_t retained = 0;

  std::uint64_t dropped() const { return dropped_speed + dropped_steering + dropped_rebalance; }
  double retained_fraction() const {
    return input ? static_cast<double>(retained) / static_cast<double>(input) : 0.0;
  }
  void write_to(KeyValues& kv, const std::string& prefix) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Split / filter / rebalance
// ============================================================================

/// floor(0.7 n), in integer arithmetic.
constexpr std::size_t train_count(std::size_t n) { return n * 7 / 10; }

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
  std::vector<std::size_t> skipped_recordings;  // indices of empty recordings
};

/// Per recording: the first floor(0.7 n) samples train, the rest test.
template <Labeled T>
Split<T> temporal_split(std::span<const std::vector<T>> recordings) {
  Split<T> out;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const auto& samples = recordings[r];
    if (samples.empty()) {
      out.skipped_recordings.push_back(r);
      continue;
    }
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (samples[i].window_end_ms < samples[i - 1].window_end_ms) {
        throw DatasetError("samples of recording " + std::to_string(r) + " not time-ordered");
      }
    }
    const std::size_t k = train_count(samples.size());
    out.train.insert(out.train.end(), samples.begin(), samples.begin() + k);
    out.test.insert(out.test.end(), samples.begin() + k, samples.end());
  }
  return out;
}

/// Population standard deviation of steering over `samples`.
template <Labeled T>
double steering_sigma(std::span<const T> samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += s.steering_deg;
  const double mean = sum / static_cast<double>(samples.size());
  double ss = 0.0;
  for (const auto& s : samples) ss += (s.steering_deg - mean) * (s.steering_deg - mean);
  return std::sqrt(ss / static_cast<double>(samples.size()));
}

enum class DropReason { None, LowSpeed, SteeringOutlier };

inline DropReason filter_reason(double speed_kmh, double steering_deg, double sigma) {
  if (speed_kmh < kMinSpeedKmh) return DropReason::LowSpeed;
  if (std::abs(steering_deg) > kSteeringClipSigmas * sigma) return DropReason::SteeringOutlier;
  return DropReason::None;
}

/// Drops speed < 15 km/h and |steering| > 3 sigma (stats.steering_sigma).
/// The same rule applies to both splits; `is_train` only labels the stats.
template <Labeled T>
std::vector<T> filter_samples(std::vector<T> samples, PrepStats& stats, bool is_train) {
  stats.split = is_train ? "train" : "test";
  stats.input += samples.size();
  std::vector<T> kept;
  kept.reserve(samples.size());
  for (auto& s : samples) {
    switch (filter_reason(s.speed_kmh, s.steering_deg, stats.steering_sigma)) {
      case DropReason::LowSpeed: ++stats.dropped_speed; break;
      case DropReason::SteeringOutlier: ++stats.dropped_steering; break;
      case DropReason::None: kept.push_back(std::move(s)); break;
    }
  }
  stats.retained = stats.input - stats.dropped();
  return kept;
}

/// Each sample with |steering| <= 5 deg is dropped with probability 0.7,
/// independently, drawing once per in-band sample in order.
template <Labeled T>
std::vector<T> rebalance_straight(std::vector<T> samples, std::uint64_t seed,
                                  PrepStats* stats = nullptr) {
  Rng rng(seed);
  std::vector<T> kept;
  kept.reserve(samples.size());
  for (auto& s : samples) {
    if (std::abs(static_cast<double>(s.steering_deg)) <= kStraightBandDeg &&
        rng.bernoulli(kStraightDropProbability)) {
      if (stats) ++stats->dropped_rebalance;
      continue;
    }
    kept.push_back(std::move(s));
  }
  if (stats) stats->retained = stats->input - stats->dropped();
  return kept;
}

// ============================================================================
// Samples and files
// ============================================================================

SampleLabel label_of(const WindowedRecord& record, const std::string& recording_id);

/// accumulate -> normalize -> downsample for DVS; normalize -> downsample for APS.
LabeledSample make_sample(const WindowedRecord& record, const std::string& recording_id,
                          int sensor_width, int sensor_height);

std::string manifest_path(const std::string& dataset_path);
std::string index_path(const std::string& dataset_path);

/// Streams records to a DDSM file; the count is patched into the header on close().
class DatasetWriter {
 public:
  explicit DatasetWriter(std::string path);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const LabeledSample& sample);
  /// Returns the record count.
  std::uint32_t close();

 private:
  void fail(const std::string& what) const;

  std::string path_;
  std::unique_ptr<std::ofstream> out_;
  std::unique_ptr<std::ofstream> index_;
  std::uint64_t offset_ = 0;
  std::uint32_t count_ = 0;
};

/// Standard manifest entries (format, version, count, layout) merged over `extra`.
KeyValues dataset_manifest(std::uint32_t count, const KeyValues& extra = {});
void write_manifest(const std::string& dataset_path, const KeyValues& manifest);

/// Writes samples, the index sidecar and the manifest. `extra` entries are
/// copied into the manifest. Empty input is an error.
KeyValues export_dataset(std::span<const LabeledSample> samples, const std::string& path,
                         const KeyValues& extra = {});

std::vector<LabeledSample> read_dataset(const std::string& path);

}  // namespace dvsdrive

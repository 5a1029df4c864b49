#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dvsdrive/recording.hpp"

namespace dvsdrive {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SensorParams {
  double threshold = 0.2;  // log-intensity contrast per event
  int width = 346;
  int height = 260;
  double log_eps = 1e-3;  // offset relative to full scale
  /// Intensity mapped to 1.0 before the log. 0 selects the peak of the first frame.
  double full_scale = 0.0;

  void validate() const;
};

/// Linear intensity image at a device timestamp.
struct IntensityFrame {
  std::uint64_t ts_us = 0;
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

struct LogImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

/// log(I / full_scale + log_eps)
class LogIntensityMap {
 public:
  LogIntensityMap(double full_scale, double log_eps);

  double operator()(double intensity) const;
  LogImage apply(const IntensityFrame& frame) const;
  double full_scale() const { return full_scale_; }

 private:
  double full_scale_;
  double log_eps_;
};

/// Memorized log intensity per pixel, kept as reference + net_events * threshold
/// so that event reconstruction reproduces it exactly.
struct PixelState {
  int width = 0;
  int height = 0;
  std::vector<double> reference;
  std::vector<std::int32_t> net_events;

  static PixelState from_log_image(const LogImage& img);
  double memorized(std::size_t i, double threshold) const {
    return reference[i] + static_cast<double>(net_events[i]) * threshold;
  }
  LogImage memorized_image(double threshold) const;
};

/// Incremental log-intensity change event generator.
///
/// Each pixel fires while |L - memorized| >= threshold; every event moves the
/// memorized level one threshold toward L. Event times are linearly
/// interpolated between the bracketing frames at the crossed level and clamped
/// to (t_prev, t_cur]. Output of each step is sorted by (ts, y, x).
class DvsSimulator {
 public:
  explicit DvsSimulator(SensorParams params);

  /// The first frame initializes pixel state and yields no events.
  std::vector<Event> feed(const IntensityFrame& frame);

  bool initialized() const { return initialized_; }
  const PixelState& state() const { return state_; }
  const PixelState& initial_state() const { return initial_; }
  const LogIntensityMap& log_map() const { return *log_map_; }
  const LogImage& last_log_image() const { return prev_log_; }
  std::uint64_t events_emitted() const { return emitted_; }
  const SensorParams& params() const { return params_; }

 private:
  SensorParams params_;
  bool initialized_ = false;
  std::optional<LogIntensityMap> log_map_;
  PixelState state_;
  PixelState initial_;
  LogImage prev_log_;
  std::uint64_t prev_ts_ = 0;
  std::uint64_t emitted_ = 0;
};

/// Needs at least two frames with strictly increasing timestamps and the
/// sensor's dimensions. Output is globally sorted by device_ts_us.
std::vector<Event> events_from_frames(std::span<const IntensityFrame> frames,
                                      const SensorParams& params);

/// Integrates events onto `initial`: each event adds polarity * threshold.
/// Returns the state after all events with ts <= t for every t in
/// `sample_times_us` (ascending). Events must be sorted by timestamp.
std::vector<LogImage> reconstruct_log_intensity(std::span<const Event> events,
                                                const PixelState& initial,
                                                const SensorParams& params,
                                                std::span<const std::uint64_t> sample_times_us);

/// Final state after all events.
LogImage reconstruct_log_intensity(std::span<const Event> events, const PixelState& initial,
                                   const SensorParams& params);

}  // namespace dvsdrive

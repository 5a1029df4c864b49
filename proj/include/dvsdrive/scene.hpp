// Synthetic driving scenes: a perspective road with curvature-driven geometry,
// rendered at an internal 50 fps for DVS simulation, 20 fps APS frames with
// auto-exposure, and 10 Hz steering/speed telemetry.
#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dvsdrive/keyvalue.hpp"
#include "dvsdrive/recording.hpp"
#include "dvsdrive/simulator.hpp"

namespace dvsdrive {

/// Piecewise-linear function of time (seconds), held constant beyond its ends.
class Profile {
 public:
  Profile() = default;
  static Profile constant(double value);
  /// "v" for a constant, or "t:v, t:v, ..." breakpoints with ascending t.
  static Profile parse(std::string_view spec, std::string_view what);
  explicit Profile(std::vector<std::pair<double, double>> points);

  double at(double t) const;
  /// Integral from 0 to t.
  double integral(double t) const;
  double min() const;
  double max() const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<double, double>> points_{{0.0, 0.0}};
};

// Steering wheel angle = gain * road curvature (bicycle model, small angle):
// steering ratio 15, wheelbase 2.7 m, radians to degrees.
inline constexpr double kSteeringRatio = 15.0;
inline constexpr double kWheelbaseM = 2.7;
inline constexpr double kSteeringGainDegM = kSteeringRatio * kWheelbaseM * 180.0 / std::numbers::pi;

inline constexpr double steering_for_curvature(double curvature_per_m) {
  return kSteeringGainDegM * curvature_per_m;
}

inline constexpr int kInternalFps = 50;
inline constexpr int kApsFps = 20;
inline constexpr int kVehicleHz = 10;
inline constexpr std::uint32_t kMinExposureUs = 50;
inline constexpr std::uint32_t kMaxExposureUs = 200000;
inline constexpr std::uint16_t kApsFullScale = 1023;

struct ScenarioParams {
  double duration_s = 10.0;
  Profile speed_kmh = Profile::constant(60.0);
  Profile curvature = Profile::constant(0.0);  // 1/m, positive bends right
  double lighting = 1.0;                       // 0 = night, 1 = full daylight
  std::uint64_t seed = 1;
  std::string id = "sim";
  std::string tag = "day";
  std::uint64_t start_host_ms = 1501288723000;
  SensorParams sensor;

  void validate() const;

  /// Keys: duration_s, seed, curvature, speed, lighting, id, scenario,
  /// start_ms, theta.
  static ScenarioParams from_config(const KeyValues& kv);
  KeyValues to_config() const;

  /// Mixed straight and curved segments, speeds mostly above 15 km/h.
  static ScenarioParams random(std::uint64_t seed, double duration_s, double lighting);
};

/// Deterministic renderer for a scenario.
class SceneRenderer {
 public:
  explicit SceneRenderer(const ScenarioParams& scenario);

  /// Linear scene intensity at time t (seconds), quantized to 2^-24.
  IntensityFrame intensity(double t_s, std::uint64_t device_ts_us) const;
  /// Auto-exposed 10-bit frame.
  ApsFrame aps(const IntensityFrame& scene) const;

 private:
  double ground_reflectance(double z, double distance) const;

  ScenarioParams scenario_;
  double focal_px_;
  double horizon_row_;
};

template <typename T>
struct Stamped {
  std::uint64_t host_ts_ms = 0;
  T value;
};

/// Streams a scenario as container packets, one internal frame step at a time.
class SceneGenerator {
 public:
  explicit SceneGenerator(ScenarioParams scenario);

  RecordingMeta meta() const;
  bool done() const { return step_ >= steps_; }
  /// Packets for the next internal frame step, in non-decreasing host time per stream.
  std::vector<Packet> next_chunk();

  std::uint64_t events_emitted() const { return sim_.events_emitted(); }
  std::uint64_t device_offset_us() const { return device_offset_us_; }
  const ScenarioParams& scenario() const { return scenario_; }
  const SceneRenderer& renderer() const { return renderer_; }

  std::uint64_t host_ms_for_device(std::uint64_t device_ts_us) const;
  std::int64_t steps() const { return steps_; }
  /// Internal 50 fps frame for step k, as fed to the DVS simulator.
  IntensityFrame internal_frame(std::int64_t k) const;

 private:
  ScenarioParams scenario_;
  SceneRenderer renderer_;
  DvsSimulator sim_;
  std::uint64_t device_offset_us_;
  std::int64_t steps_;
  std::int64_t step_ = 0;
};

struct Scene {
  RecordingMeta meta;
  std::vector<Stamped<ApsFrame>> aps_frames;
  std::vector<Stamped<VehicleSample>> vehicle;
  std::vector<Event> events;
  std::vector<Packet> packets;  // everything above in generation order
};

Scene generate_scene(const ScenarioParams& scenario);

}  // namespace dvsdrive

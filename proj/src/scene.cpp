#include "dvsdrive/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dvsdrive/random.hpp"

namespace dvsdrive {

// ============================================================================
// Profile
// ============================================================================

Profile Profile::constant(double value) { return Profile({{0.0, value}}); }

Profile::Profile(std::vector<std::pair<double, double>> points) : points_(std::move(points)) {
  if (points_.empty()) throw ConfigError("profile needs at least one point");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i].first) || !std::isfinite(points_[i].second)) {
      throw ConfigError("profile values must be finite");
    }
    if (i > 0 && !(points_[i].first > points_[i - 1].first)) {
      throw ConfigError("profile breakpoints must have ascending times");
    }
  }
}

Profile Profile::parse(std::string_view spec, std::string_view what) {
  std::vector<std::pair<double, double>> pts;
  if (spec.find(':') == std::string_view::npos) {
    return constant(parse_double(spec, what));
  }
  while (!spec.empty()) {
    const auto comma = spec.find(',');
    const auto item = spec.substr(0, comma);
    spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError(std::string(what) + ": expected t:value breakpoints");
    }
    pts.emplace_back(parse_double(item.substr(0, colon), what),
                     parse_double(item.substr(colon + 1), what));
  }
  return Profile(std::move(pts));
}

double Profile::at(double t) const {
  if (t <= points_.front().first) return points_.front().second;
  if (t >= points_.back().first) return points_.back().second;
  const auto hi = std::upper_bound(points_.begin(), points_.end(), t,
                                   [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  const double f = (t - lo->first) / (hi->first - lo->first);
  return lo->second + f * (hi->second - lo->second);
}

double Profile::integral(double t) const {
  if (t <= 0.0) return 0.0;
  std::vector<double> knots{0.0};
  for (const auto& [pt, v] : points_) {
    if (pt > 0.0 && pt < t) knots.push_back(pt);
  }
  knots.push_back(t);
  double sum = 0.0;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    sum += (knots[i] - knots[i - 1]) * 0.5 * (at(knots[i - 1]) + at(knots[i]));
  }
  return sum;
}

double Profile::min() const {
  return std::min_element(points_.begin(), points_.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->second;
}

double Profile::max() const {
  return std::max_element(points_.begin(), points_.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->second;
}

std::string Profile::to_string() const {
  std::ostringstream ss;
  ss.precision(17);
  if (points_.size() == 1) {
    ss << points_.front().second;
    return ss.str();
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (i) ss << ",";
    ss << points_[i].first << ":" << points_[i].second;
  }
  return ss.str();
}

// ============================================================================
// Scenario
// ============================================================================

void ScenarioParams::validate() const {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw ConfigError("scenario duration must be positive");
  }
  if (speed_kmh.min() < 0.0 || speed_kmh.max() > 160.0) {
    throw ConfigError("speed profile must stay within 0..160 km/h");
  }
  const double worst = std::max(std::abs(curvature.min()), std::abs(curvature.max()));
  if (steering_for_curvature(worst) > 720.0) {
    throw ConfigError("curvature profile implies steering beyond 720 deg");
  }
  if (!(lighting >= 0.0 && lighting <= 1.0)) throw ConfigError("lighting must be in [0, 1]");
  if (id.find('\n') != std::string::npos || tag.find('\n') != std::string::npos) {
    throw ConfigError("id and scenario tag must be single-line");
  }
  try {
    sensor.validate();
  } catch (const SimulationError& e) {
    throw ConfigError(e.what());
  }
}

ScenarioParams ScenarioParams::from_config(const KeyValues& kv) {
  ScenarioParams s;
  s.duration_s = kv.get_double("duration_s");
  s.seed = kv.get_u64_or("seed", s.seed);
  if (kv.contains("curvature")) s.curvature = Profile::parse(kv.get("curvature"), "curvature");
  if (kv.contains("speed")) s.speed_kmh = Profile::parse(kv.get("speed"), "speed");
  s.lighting = kv.get_double_or("lighting", s.lighting);
  s.id = kv.get_or("id", s.id);
  s.tag = kv.get_or("scenario", s.lighting < 0.5 ? "night" : "day");
  s.start_host_ms = kv.get_u64_or("start_ms", s.start_host_ms);
  s.sensor.threshold = kv.get_double_or("theta", s.sensor.threshold);
  s.validate();
  return s;
}

KeyValues ScenarioParams::to_config() const {
  KeyValues kv;
  std::ostringstream d;
  d.precision(17);
  d << duration_s;
  kv.set("duration_s", d.str());
  kv.set("seed", std::to_string(seed));
  kv.set("curvature", curvature.to_string());
  kv.set("speed", speed_kmh.to_string());
  std::ostringstream l;
  l.precision(17);
  l << lighting;
  kv.set("lighting", l.str());
  kv.set("id", id);
  kv.set("scenario", tag);
  kv.set("start_ms", std::to_string(start_host_ms));
  std::ostringstream th;
  th.precision(17);
  th << sensor.threshold;
  kv.set("theta", th.str());
  return kv;
}

ScenarioParams ScenarioParams::random(std::uint64_t seed, double duration_s, double lighting) {
  Rng rng(splitmix64(seed));
  ScenarioParams s;
  s.seed = seed;
  s.duration_s = duration_s;
  s.lighting = lighting;
  s.id = "sim-" + std::to_string(seed);
  s.tag = lighting < 0.5 ? "night" : "day";

  std::vector<std::pair<double, double>> curv;
  std::vector<std::pair<double, double>> speed;
  for (double t = 0.0; t <= duration_s; t += rng.uniform(2.0, 5.0)) {
    const double c = rng.bernoulli(0.4) ? 0.0 : rng.uniform(-0.012, 0.012);
    curv.emplace_back(t, c);
  }
  for (double t = 0.0; t <= duration_s; t += rng.uniform(3.0, 8.0)) {
    const double v = rng.bernoulli(0.1) ? rng.uniform(3.0, 14.0) : rng.uniform(25.0, 110.0);
    speed.emplace_back(t, v);
  }
  s.curvature = Profile(std::move(curv));
  s.speed_kmh = Profile(std::move(speed));
  s.validate();
  return s;
}

// ============================================================================
// Renderer
// ============================================================================

namespace {

constexpr double kHorizontalFovDeg = 71.0;
constexpr double kCameraHeightM = 1.3;
constexpr double kHorizonFraction = 0.38;
constexpr double kMaxDepthM = 250.0;
constexpr double kRoadHalfWidthM = 3.6;
constexpr double kEdgeLineWidthM = 0.15;
constexpr double kDashHalfWidthM = 0.075;
constexpr double kDashPeriodM = 12.0;
constexpr double kDashLengthM = 3.0;
constexpr double kBandLengthM = 5.0;

constexpr double kSkyReflectance = 0.55;
constexpr double kFarReflectance = 0.2;
constexpr double kRoadReflectance = 0.30;
constexpr double kLineReflectance = 0.85;

constexpr double kQuantum = 0x1.0p-24;
// ADC codes per (intensity * microsecond); daylight road at 1 ms reads ~400.
constexpr double kApsGain = 400.0 / (kRoadReflectance * 1000.0);
constexpr double kApsTargetCode = 400.0;

double overlap(double a, double b, double x) {
  return std::max(0.0, std::min(b, x + 1.0) - std::max(a, x));
}

}  // namespace

SceneRenderer::SceneRenderer(const ScenarioParams& scenario) : scenario_(scenario) {
  const double half_fov = kHorizontalFovDeg * std::numbers::pi / 360.0;
  focal_px_ = (scenario_.sensor.width / 2.0) / std::tan(half_fov);
  horizon_row_ = kHorizonFraction * scenario_.sensor.height;
}

double SceneRenderer::ground_reflectance(double z, double distance) const {
  const auto band = static_cast<std::int64_t>(std::floor((z + distance) / kBandLengthM));
  const std::uint64_t h = splitmix64(scenario_.seed * 0x9E3779B97F4A7C15ull ^
                                     static_cast<std::uint64_t>(band));
  return 0.08 + 0.14 * static_cast<double>(h >> 11) * 0x1.0p-53;
}

IntensityFrame SceneRenderer::intensity(double t_s, std::uint64_t device_ts_us) const {
  const int w = scenario_.sensor.width;
  const int h = scenario_.sensor.height;
  IntensityFrame frame{device_ts_us, w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};

  const double kappa = scenario_.curvature.at(t_s);
  const double distance = scenario_.speed_kmh.integral(t_s) / 3.6;
  const double ambient = std::pow(10.0, 3.0 * (scenario_.lighting - 1.0));
  const double headlights = 0.4 * (1.0 - scenario_.lighting);
  const double cx = w / 2.0;

  std::vector<double> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::fill(row.begin(), row.end(), 0.0);
    for (const double sub : {0.25, 0.75}) {
      const double v = y + sub;
      if (v <= horizon_row_) {
        for (auto& px : row) px += 0.5 * kSkyReflectance * ambient;
        continue;
      }
      const double z = focal_px_ * kCameraHeightM / (v - horizon_row_);
      if (z > kMaxDepthM) {
        for (auto& px : row) px += 0.5 * kFarReflectance * ambient;
        continue;
      }
      const double illum = ambient + headlights * std::min(1.0, (10.0 / z) * (10.0 / z));
      const double scale = focal_px_ / z;
      const double center = 0.5 * kappa * z * z;
      auto u = [&](double lateral_m) { return cx + scale * (center + lateral_m); };
      const double road_l = u(-kRoadHalfWidthM);
      const double road_r = u(kRoadHalfWidthM);
      const double line_l = u(-kRoadHalfWidthM + kEdgeLineWidthM);
      const double line_r = u(kRoadHalfWidthM - kEdgeLineWidthM);
      const bool dash = std::fmod(z + distance, kDashPeriodM) < kDashLengthM;
      const double dash_l = u(-kDashHalfWidthM);
      const double dash_r = u(kDashHalfWidthM);
      const double grass = ground_reflectance(z, distance);

      for (int x = 0; x < w; ++x) {
        const double road = overlap(road_l, road_r, x);
        double lines = overlap(road_l, line_l, x) + overlap(line_r, road_r, x);
        if (dash) lines += overlap(dash_l, dash_r, x);
        const double refl = grass + road * (kRoadReflectance - grass) +
                            lines * (kLineReflectance - kRoadReflectance);
        row[x] += 0.5 * refl * illum;
      }
    }
    double* out = frame.values.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) out[x] = std::round(row[x] / kQuantum) * kQuantum;
  }
  return frame;
}

ApsFrame SceneRenderer::aps(const IntensityFrame& scene) const {
  const int w = scene.width;
  const int h = scene.height;
  // Auto-exposure meters the road surface in the lower third of the image.
  double sum = 0.0;
  const int first_row = h - h / 3;
  for (int y = first_row; y < h; ++y) {
    for (int x = 0; x < w; ++x) sum += scene.values[static_cast<std::size_t>(y) * w + x];
  }
  const double mean = sum / (static_cast<double>(h - first_row) * w);
  double exposure = mean > 0.0 ? kApsTargetCode / (mean * kApsGain) : kMaxExposureUs;
  exposure = std::clamp(std::round(exposure), static_cast<double>(kMinExposureUs),
                        static_cast<double>(kMaxExposureUs));

  ApsFrame f;
  f.width = static_cast<std::uint16_t>(w);
  f.height = static_cast<std::uint16_t>(h);
  f.exposure_us = static_cast<std::uint32_t>(exposure);
  f.device_ts_us = scene.ts_us;
  f.pixels.resize(scene.values.size());
  for (std::size_t i = 0; i < scene.values.size(); ++i) {
    const double code = std::round(scene.values[i] * exposure * kApsGain);
    f.pixels[i] = static_cast<std::uint16_t>(std::min<double>(code, kApsFullScale));
  }
  return f;
}

// ============================================================================
// Generator
// ============================================================================

namespace {

constexpr std::uint64_t kInternalStepUs = 1000000 / kInternalFps;
constexpr std::uint64_t kApsStepUs = 1000000 / kApsFps;
constexpr std::uint64_t kVehicleStepUs = 1000000 / kVehicleHz;

}  // namespace

SceneGenerator::SceneGenerator(ScenarioParams scenario)
    : scenario_((scenario.validate(), std::move(scenario))),
      renderer_(scenario_),
      sim_(scenario_.sensor),
      device_offset_us_(1000000 + splitmix64(scenario_.seed) % 1000000000) {
  const auto duration_us = static_cast<std::uint64_t>(std::llround(scenario_.duration_s * 1e6));
  if (duration_us == 0) throw ConfigError("scenario duration rounds to zero");
  steps_ = static_cast<std::int64_t>((duration_us + kInternalStepUs - 1) / kInternalStepUs);
}

RecordingMeta SceneGenerator::meta() const {
  return {static_cast<std::uint16_t>(scenario_.sensor.width),
          static_cast<std::uint16_t>(scenario_.sensor.height), scenario_.id, scenario_.tag,
          scenario_.start_host_ms};
}

std::uint64_t SceneGenerator::host_ms_for_device(std::uint64_t device_ts_us) const {
  return scenario_.start_host_ms + (device_ts_us - device_offset_us_) / 1000;
}

IntensityFrame SceneGenerator::internal_frame(std::int64_t k) const {
  const std::uint64_t t_us = static_cast<std::uint64_t>(k) * kInternalStepUs;
  return renderer_.intensity(static_cast<double>(t_us) * 1e-6, device_offset_us_ + t_us);
}

std::vector<Packet> SceneGenerator::next_chunk() {
  std::vector<Packet> out;
  if (done()) return out;
  const std::uint64_t t_us = static_cast<std::uint64_t>(step_) * kInternalStepUs;
  const std::uint64_t chunk_end = t_us + kInternalStepUs;
  const auto duration_us = static_cast<std::uint64_t>(std::llround(scenario_.duration_s * 1e6));

  const auto events = sim_.feed(internal_frame(step_));
  for (std::size_t i = 0; i < events.size();) {
    const std::uint64_t host = host_ms_for_device(events[i].device_ts_us);
    std::size_t j = i;
    while (j < events.size() && host_ms_for_device(events[j].device_ts_us) == host) ++j;
    auto batch = split_event_batch(host, std::span(events).subspan(i, j - i));
    std::move(batch.begin(), batch.end(), std::back_inserter(out));
    i = j;
  }

  for (std::uint64_t a = (t_us + kApsStepUs - 1) / kApsStepUs * kApsStepUs;
       a < chunk_end && a < duration_us; a += kApsStepUs) {
    const auto scene = renderer_.intensity(static_cast<double>(a) * 1e-6, device_offset_us_ + a);
    out.push_back(Packet::frame(scenario_.start_host_ms + a / 1000, renderer_.aps(scene)));
  }

  for (std::uint64_t v = (t_us + kVehicleStepUs - 1) / kVehicleStepUs * kVehicleStepUs;
       v < chunk_end && v < duration_us; v += kVehicleStepUs) {
    const double t = static_cast<double>(v) * 1e-6;
    const std::uint64_t host = scenario_.start_host_ms + v / 1000;
    out.push_back(Packet::vehicle(
        host, {VehicleChannel::SteeringWheelAngle,
               steering_for_curvature(scenario_.curvature.at(t))}));
    out.push_back(Packet::vehicle(
        host, {VehicleChannel::VehicleSpeed, std::clamp(scenario_.speed_kmh.at(t), 0.0, 160.0)}));
  }
  ++step_;
  return out;
}

Scene generate_scene(const ScenarioParams& scenario) {
  SceneGenerator gen(scenario);
  Scene scene;
  scene.meta = gen.meta();
  while (!gen.done()) {
    for (auto& p : gen.next_chunk()) {
      if (const auto* batch = std::get_if<EventBatch>(&p.payload)) {
        scene.events.insert(scene.events.end(), batch->begin(), batch->end());
      } else if (const auto* f = std::get_if<ApsFrame>(&p.payload)) {
        scene.aps_frames.push_back({p.host_ts_ms, *f});
      } else {
        scene.vehicle.push_back({p.host_ts_ms, std::get<VehicleSample>(p.payload)});
      }
      scene.packets.push_back(std::move(p));
    }
  }
  return scene;
}

}  // namespace dvsdrive

#include "dvsdrive/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dvsdrive {

void SensorParams::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw SimulationError("threshold must be positive");
  }
  if (!(log_eps > 0.0) || !std::isfinite(log_eps)) {
    throw SimulationError("log_eps must be positive");
  }
  if (width <= 0 || height <= 0 || width > 0xFFFF || height > 0xFFFF) {
    throw SimulationError("sensor size out of range");
  }
  if (!(full_scale >= 0.0) || !std::isfinite(full_scale)) {
    throw SimulationError("full_scale must be finite and non-negative");
  }
}

LogIntensityMap::LogIntensityMap(double full_scale, double log_eps)
    : full_scale_(full_scale), log_eps_(log_eps) {
  if (!(full_scale > 0.0) || !(log_eps > 0.0)) {
    throw SimulationError("log map needs positive full scale and eps");
  }
}

double LogIntensityMap::operator()(double intensity) const {
  return std::log(intensity / full_scale_ + log_eps_);
}

LogImage LogIntensityMap::apply(const IntensityFrame& frame) const {
  LogImage out{frame.width, frame.height, std::vector<double>(frame.values.size())};
  std::transform(frame.values.begin(), frame.values.end(), out.values.begin(),
                 [this](double v) { return (*this)(v); });
  return out;
}

PixelState PixelState::from_log_image(const LogImage& img) {
  return {img.width, img.height, img.values, std::vector<std::int32_t>(img.values.size(), 0)};
}

LogImage PixelState::memorized_image(double threshold) const {
  LogImage out{width, height, std::vector<double>(reference.size())};
  for (std::size_t i = 0; i < reference.size(); ++i) out.values[i] = memorized(i, threshold);
  return out;
}

namespace {

void check_frame(const IntensityFrame& f, const SensorParams& p) {
  if (f.width != p.width || f.height != p.height ||
      f.values.size() != static_cast<std::size_t>(f.width) * f.height) {
    throw SimulationError("frame dimensions " + std::to_string(f.width) + "x" +
                          std::to_string(f.height) + " do not match sensor " +
                          std::to_string(p.width) + "x" + std::to_string(p.height));
  }
  for (const double v : f.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw SimulationError("frame intensities must be finite and non-negative");
    }
  }
}

}  // namespace

DvsSimulator::DvsSimulator(SensorParams params) : params_(params) { params_.validate(); }

std::vector<Event> DvsSimulator::feed(const IntensityFrame& frame) {
  check_frame(frame, params_);
  if (!initialized_) {
    double fs = params_.full_scale;
    if (fs == 0.0) {
      fs = *std::max_element(frame.values.begin(), frame.values.end());
      if (fs <= 0.0) fs = 1.0;
    }
    log_map_.emplace(fs, params_.log_eps);
    prev_log_ = log_map_->apply(frame);
    state_ = PixelState::from_log_image(prev_log_);
    initial_ = state_;
    prev_ts_ = frame.ts_us;
    initialized_ = true;
    return {};
  }
  if (frame.ts_us <= prev_ts_) {
    throw SimulationError("frame timestamps must be strictly increasing (" +
                          std::to_string(frame.ts_us) + " after " + std::to_string(prev_ts_) +
                          ")");
  }

  const double theta = params_.threshold;
  const std::uint64_t t0 = prev_ts_;
  const std::uint64_t dt = frame.ts_us - t0;
  const double dt_f = static_cast<double>(dt);
  LogImage cur = log_map_->apply(frame);
  std::vector<Event> out;

  const int w = params_.width;
  for (int y = 0; y < params_.height; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double level = cur.values[i];
      const double ref = state_.reference[i];
      const std::int32_t net = state_.net_events[i];
      const double diff = level - (ref + net * theta);
      if (!(std::abs(diff) >= theta)) continue;

      const int sign = diff > 0 ? 1 : -1;
      // fires(k): the (k+1)-th event of this step still crosses threshold.
      auto fires = [&](std::int64_t k) {
        const double mem = ref + static_cast<double>(net + sign * k) * theta;
        return std::abs(level - mem) >= theta;
      };
      auto n = static_cast<std::int64_t>(std::floor(std::abs(diff) / theta));
      n = std::max<std::int64_t>(n, 1);
      while (fires(n)) ++n;
      while (n > 1 && !fires(n - 1)) --n;

      const double prev_level = prev_log_.values[i];
      const double span = level - prev_level;
      for (std::int64_t j = 1; j <= n; ++j) {
        const double crossed = ref + static_cast<double>(net + sign * j) * theta;
        const double frac = (crossed - prev_level) / span;
        const auto offset = std::clamp<long long>(std::llround(frac * dt_f), 1,
                                                  static_cast<long long>(dt));
        out.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                            static_cast<std::int8_t>(sign),
                            t0 + static_cast<std::uint64_t>(offset)});
      }
      state_.net_events[i] = net + static_cast<std::int32_t>(sign * n);
    }
  }
  // Emission order is (y, x, crossing); a stable sort by time yields (ts, y, x).
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    return a.device_ts_us < b.device_ts_us;
  });

  prev_log_ = std::move(cur);
  prev_ts_ = frame.ts_us;
  emitted_ += out.size();
  return out;
}

std::vector<Event> events_from_frames(std::span<const IntensityFrame> frames,
                                      const SensorParams& params) {
  if (frames.size() < 2) throw SimulationError("need at least two frames");
  DvsSimulator sim(params);
  std::vector<Event> all;
  for (const auto& f : frames) {
    auto batch = sim.feed(f);
    all.insert(all.end(), batch.begin(), batch.end());
  }
  return all;
}

std::vector<LogImage> reconstruct_log_intensity(std::span<const Event> events,
                                                const PixelState& initial,
                                                const SensorParams& params,
                                                std::span<const std::uint64_t> sample_times_us) {
  params.validate();
  if (initial.width != params.width || initial.height != params.height) {
    throw SimulationError("initial state does not match sensor size");
  }
  if (!std::is_sorted(sample_times_us.begin(), sample_times_us.end())) {
    throw SimulationError("sample times must be ascending");
  }
  PixelState state = initial;
  std::vector<LogImage> out;
  out.reserve(sample_times_us.size());
  std::size_t next = 0;
  std::uint64_t last_ts = 0;
  auto apply_until = [&](std::uint64_t limit) {
    for (; next < events.size(); ++next) {
      const Event& e = events[next];
      if (e.device_ts_us > limit) break;
      if (e.device_ts_us < last_ts) throw SimulationError("events not sorted by timestamp");
      last_ts = e.device_ts_us;
      if (e.x >= params.width || e.y >= params.height) {
        throw SimulationError("event " + std::to_string(next) + " at (" + std::to_string(e.x) +
                              "," + std::to_string(e.y) + ") outside sensor");
      }
      state.net_events[static_cast<std::size_t>(e.y) * params.width + e.x] += e.polarity;
    }
  };
  for (const auto t : sample_times_us) {
    apply_until(t);
    out.push_back(state.memorized_image(params.threshold));
  }
  return out;
}

LogImage reconstruct_log_intensity(std::span<const Event> events, const PixelState& initial,
                                   const SensorParams& params) {
  const std::uint64_t times[] = {UINT64_MAX};
  return std::move(reconstruct_log_intensity(events, initial, params, times).front());
}

}  // namespace dvsdrive

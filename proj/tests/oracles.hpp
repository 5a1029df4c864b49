// Independent reference implementations used by the tests. Deliberately slow
// and literal; they share no code with the library beyond its data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "dvsdrive/recording.hpp"
#include "dvsdrive/simulator.hpp"

namespace oracle {

using dvsdrive::Event;

/// Signed per-pixel event count, one event at a time.
inline std::vector<std::int32_t> accumulate(const std::vector<Event>& events, int w, int h) {
  std::vector<std::int32_t> bins(static_cast<std::size_t>(w) * h, 0);
  for (const auto& e : events) {
    if (e.polarity > 0) {
      bins[static_cast<std::size_t>(e.y) * w + e.x] += 1;
    } else {
      bins[static_cast<std::size_t>(e.y) * w + e.x] -= 1;
    }
  }
  return bins;
}

/// Event generation by stepping the memorized level one threshold at a time.
/// Log levels come from the same formula the sensor documents:
/// log(I / full_scale + eps), full_scale = peak of the first frame when unset.
inline std::vector<Event> dvs_events(const std::vector<dvsdrive::IntensityFrame>& frames,
                                     const dvsdrive::SensorParams& p) {
  double fs = p.full_scale;
  if (fs == 0.0) {
    fs = 0.0;
    for (double v : frames[0].values) fs = std::max(fs, v);
    if (fs <= 0.0) fs = 1.0;
  }
  auto lg = [&](double v) { return std::log(v / fs + p.log_eps); };
  const std::size_t n = frames[0].values.size();
  std::vector<double> ref(n);
  std::vector<std::int64_t> net(n, 0);
  std::vector<double> prev(n);
  for (std::size_t i = 0; i < n; ++i) ref[i] = prev[i] = lg(frames[0].values[i]);

  std::vector<Event> out;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const std::uint64_t t0 = frames[f - 1].ts_us;
    const std::uint64_t dt = frames[f].ts_us - t0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cur = lg(frames[f].values[i]);
      for (;;) {
        const double mem = ref[i] + static_cast<double>(net[i]) * p.threshold;
        if (!(std::abs(cur - mem) >= p.threshold)) break;
        const int s = cur > mem ? 1 : -1;
        net[i] += s;
        const double crossed = ref[i] + static_cast<double>(net[i]) * p.threshold;
        long long off = std::llround((crossed - prev[i]) / (cur - prev[i]) * static_cast<double>(dt));
        if (off < 1) off = 1;
        if (off > static_cast<long long>(dt)) off = static_cast<long long>(dt);
        out.push_back({static_cast<std::uint16_t>(i % p.width),
                       static_cast<std::uint16_t>(i / p.width), static_cast<std::int8_t>(s),
                       t0 + static_cast<std::uint64_t>(off)});
      }
      prev[i] = cur;
    }
  }
  // Crossings of one pixel are generated in time order, so a total order on
  // (ts, y, x) plus generation order is a full specification.
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    return std::tie(a.device_ts_us, a.y, a.x) < std::tie(b.device_ts_us, b.y, b.x);
  });
  return out;
}

/// Sorts everything by (host_ts_ms, stream id), file order breaking ties.
inline std::vector<dvsdrive::Packet> merge(std::vector<dvsdrive::Packet> all) {
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::make_tuple(all[a].host_ts_ms, static_cast<int>(all[a].stream), a) <
           std::make_tuple(all[b].host_ts_ms, static_cast<int>(all[b].stream), b);
  });
  std::vector<dvsdrive::Packet> out;
  for (auto i : order) out.push_back(all[i]);
  return out;
}

/// Exact binomial CDF P(X <= k) summed from log-space terms in long double.
inline long double binomial_cdf(int k, int n, long double p) {
  long double sum = 0.0L;
  for (int i = 0; i <= k; ++i) {
    sum += std::exp(std::lgamma(static_cast<long double>(n) + 1) -
                    std::lgamma(static_cast<long double>(i) + 1) -
                    std::lgamma(static_cast<long double>(n - i) + 1) + i * std::log(p) +
                    (n - i) * std::log1p(-p));
  }
  return sum;
}

/// Smallest k with P(X <= k) >= q.
inline int binomial_quantile(long double q, int n, long double p) {
  long double sum = 0.0L;
  for (int i = 0; i <= n; ++i) {
    sum += std::exp(std::lgamma(static_cast<long double>(n) + 1) -
                    std::lgamma(static_cast<long double>(i) + 1) -
                    std::lgamma(static_cast<long double>(n - i) + 1) + i * std::log(p) +
                    (n - i) * std::log1p(-p));
    if (sum >= q) return i;
  }
  return n;
}

/// Which sensor pixels feed output pixel (i, j) of the 172x128 image.
inline std::vector<std::pair<int, int>> pool_sources(int i, int j) {
  const int crop_x = (346 - 344) / 2;
  const int crop_y = (260 - 256) / 2;
  return {{crop_x + 2 * i, crop_y + 2 * j},
          {crop_x + 2 * i + 1, crop_y + 2 * j},
          {crop_x + 2 * i, crop_y + 2 * j + 1},
          {crop_x + 2 * i + 1, crop_y + 2 * j + 1}};
}

}  // namespace oracle

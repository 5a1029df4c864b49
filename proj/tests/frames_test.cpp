#include <doctest.h>

#include <algorithm>

#include "dvsdrive/frames.hpp"
#include "dvsdrive/random.hpp"
#include "oracles.hpp"
#include "random_data.hpp"

using namespace dvsdrive;

namespace {

DvsHistogram random_hist(Rng& rng, int w, int h, int spread) {
  DvsHistogram hist{w, h, std::vector<std::int32_t>(static_cast<std::size_t>(w) * h)};
  for (auto& b : hist.bins) {
    if (rng.bernoulli(0.6)) continue;
    b = static_cast<std::int32_t>(rng.below(2 * spread + 1)) - spread;
  }
  return hist;
}

NormalizedImage random_image(Rng& rng) {
  NormalizedImage img{kSensorWidth, kSensorHeight,
                      std::vector<double>(static_cast<std::size_t>(kSensorWidth) * kSensorHeight)};
  for (auto& v : img.values) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("accumulate: empty, hand example, bounds") {
  const auto empty = accumulate_dvs({}, 5, 4);
  CHECK(std::all_of(empty.bins.begin(), empty.bins.end(), [](int b) { return b == 0; }));

  const std::vector<Event> ev = {{1, 2, 1, 0}, {1, 2, 1, 1}, {1, 2, -1, 2}};
  const auto h = accumulate_dvs(ev, 5, 4);
  CHECK(h.at(1, 2) == 1);
  int nonzero = 0;
  for (const auto b : h.bins) nonzero += b != 0;
  CHECK(nonzero == 1);

  const std::vector<Event> bad = {{0, 0, 1, 0}, {5, 0, 1, 0}};
  try {
    accumulate_dvs(bad, 5, 4);
    FAIL("expected error");
  } catch (const FrameError& e) {
    CHECK(std::string(e.what()).find("event 1") != std::string::npos);
  }
}

TEST_CASE("accumulate matches the per-event oracle and ignores event order") {
  Rng rng(8);
  std::vector<Event> ev(100000);
  for (auto& e : ev) e = testdata::random_event(rng, kSensorWidth, kSensorHeight, rng.below(1000));
  const auto h = accumulate_dvs(ev, kSensorWidth, kSensorHeight);
  CHECK(h.bins == oracle::accumulate(ev, kSensorWidth, kSensorHeight));
  std::reverse(ev.begin(), ev.end());
  CHECK(accumulate_dvs(ev, kSensorWidth, kSensorHeight).bins == h.bins);
  std::int64_t sum = 0, abs_sum = 0, on = 0;
  for (const auto b : h.bins) sum += b, abs_sum += std::abs(b);
  for (const auto& e : ev) on += e.polarity > 0;
  CHECK(sum == on - (static_cast<std::int64_t>(ev.size()) - on));
  CHECK(abs_sum <= static_cast<std::int64_t>(ev.size()));
}

TEST_CASE("normalize_dvs: zero histogram and symmetric pair") {
  DvsHistogram zero{4, 3, std::vector<std::int32_t>(12, 0)};
  const auto z = normalize_dvs(zero);
  CHECK(std::all_of(z.values.begin(), z.values.end(), [](double v) { return v == 0.5; }));

  DvsHistogram pair{4, 3, std::vector<std::int32_t>(12, 0)};
  pair.bins[2] = 5;
  pair.bins[7] = -5;
  const auto n = normalize_dvs(pair);
  CHECK(n.values[2] + n.values[7] == 1.0);
  CHECK(n.values[2] > 0.5);
  CHECK(n.values[0] == 0.5);
}

TEST_CASE("normalize_dvs: clip at three sigma of this histogram") {
  // 99 zeros and one 100: sigma = sqrt(99), so 100 clips to 1.
  DvsHistogram h{10, 10, std::vector<std::int32_t>(100, 0)};
  h.bins[0] = 100;
  h.bins[1] = 10;
  const auto n = normalize_dvs(h);
  CHECK(n.values[0] == 1.0);
  double mean = 1.1, ss = 0;
  for (const auto b : h.bins) ss += (b - mean) * (b - mean);
  const double sigma = std::sqrt(ss / 100);
  CHECK(n.values[1] == doctest::Approx(0.5 + 0.5 * 10 / (3 * sigma)));
}

TEST_CASE("normalize_dvs: ranges and odd symmetry on random histograms") {
  Rng rng(99);
  for (int t = 0; t < 300; ++t) {
    auto h = random_hist(rng, 1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(30)),
                         1 + static_cast<int>(rng.below(50)));
    const auto a = normalize_dvs(h);
    for (auto& b : h.bins) b = -b;
    const auto b = normalize_dvs(h);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      REQUIRE(a.values[i] >= 0.0);
      REQUIRE(a.values[i] <= 1.0);
      REQUIRE(b.values[i] == 1.0 - a.values[i]);
      if (h.bins[i] == 0) REQUIRE(a.values[i] == 0.5);
    }
  }
}

TEST_CASE("normalize_aps") {
  ApsFrame f;
  f.width = 3;
  f.height = 1;
  f.pixels = {0, 1023, 512};
  const auto n = normalize_aps(f);
  CHECK(n.values[0] == 0.0);
  CHECK(n.values[1] == 1.0);
  CHECK(n.values[2] == doctest::Approx(0.5005).epsilon(1e-4));
  f.pixels = {2000, 1024, 65535};
  const auto c = normalize_aps(f);
  CHECK(std::all_of(c.values.begin(), c.values.end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("downsample: constant, checkerboard, index oracle, size check") {
  NormalizedImage c{kSensorWidth, kSensorHeight,
                    std::vector<double>(static_cast<std::size_t>(kSensorWidth) * kSensorHeight, 0.3)};
  const auto dc = downsample(c);
  CHECK(dc.width == 172);
  CHECK(dc.height == 128);
  CHECK(std::all_of(dc.values.begin(), dc.values.end(), [](double v) { return v == doctest::Approx(0.3); }));

  NormalizedImage checker = c;
  for (int y = 0; y < kSensorHeight; ++y) {
    for (int x = 0; x < kSensorWidth; ++x) checker.values[y * kSensorWidth + x] = (x + y) % 2;
  }
  const auto dk = downsample(checker);
  CHECK(std::all_of(dk.values.begin(), dk.values.end(), [](double v) { return v == 0.5; }));

  Rng rng(4);
  const auto img = random_image(rng);
  const auto d = downsample(img);
  for (int j = 0; j < kNetHeight; ++j) {
    for (int i = 0; i < kNetWidth; ++i) {
      double sum = 0;
      for (const auto& [x, y] : oracle::pool_sources(i, j)) sum += img.at(x, y);
      REQUIRE(d.at(i, j) == doctest::Approx(sum / 4).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(downsample(NormalizedImage{344, 256, std::vector<double>(344 * 256)}), FrameError);
}

TEST_CASE("pgm encoding") {
  NormalizedImage img{2, 1, {0.0, 1.0}};
  const auto pgm = encode_pgm(img);
  CHECK(pgm == std::string("P5\n2 1\n255\n") + '\0' + '\xff');
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "dvsdrive/cli.hpp"
#include "dvsdrive/dataset.hpp"

using namespace dvsdrive;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dvsdrive_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = run({});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("simulate") != std::string::npos);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"info"}).code == kExitUsage);
  CHECK(run({"simulate", "--bogus"}).code == kExitUsage);
  CHECK(run({"prep", "--label-mode", "cubic"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("simulate then info reports the scenario arithmetic") {
  const auto dir = temp_dir("sim");
  write_file(dir / "s.cfg", "duration_s=10\nseed=4\ncurvature=0:0,5:0.005,10:-0.003\nspeed=50\nid=cli-test\n");
  const auto rec = (dir / "r.ddrc").string();
  auto r = run({"simulate", "--scenario", (dir / "s.cfg").string(), "--out", rec});
  REQUIRE(r.code == kExitOk);
  const auto info = run({"info", rec});
  REQUIRE(info.code == kExitOk);
  CHECK(info.out.find("vehicle.steering_wheel_angle.packets=100\n") != std::string::npos);
  CHECK(info.out.find("vehicle.vehicle_speed.packets=100\n") != std::string::npos);
  CHECK(info.out.find("vehicle.steering_wheel_angle.rate_hz=10.000\n") != std::string::npos);
  CHECK(info.out.find("aps.packets=200\n") != std::string::npos);
  CHECK(info.out.find("id=cli-test\n") != std::string::npos);
  // Simulator event count and container event count agree.
  const auto ev_pos = r.out.find("dvs_events=");
  const auto ev_line = r.out.substr(ev_pos, r.out.find('\n', ev_pos) - ev_pos);
  CHECK(info.out.find("dvs." + ev_line.substr(4) + "\n") != std::string::npos);

  // Same inputs, same bytes.
  const auto rec2 = (dir / "r2.ddrc").string();
  REQUIRE(run({"simulate", "--scenario", (dir / "s.cfg").string(), "--out", rec2}).code == kExitOk);
  std::ifstream a(rec, std::ios::binary), b(rec2, std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) ==
        std::string(std::istreambuf_iterator<char>(b), {}));
  fs::remove_all(dir);
}

TEST_CASE("processing errors exit 1 with a one-line diagnostic") {
  const auto dir = temp_dir("err");
  write_file(dir / "bad.cfg", "seed=1\n");  // no duration
  const auto r = run({"simulate", "--scenario", (dir / "bad.cfg").string(), "--out",
                      (dir / "x.ddrc").string()});
  CHECK(r.code == kExitProcessing);
  CHECK(r.err.find("duration_s") != std::string::npos);
  write_file(dir / "junk.ddrc", "not a container");
  CHECK(run({"info", (dir / "junk.ddrc").string()}).code == kExitProcessing);
  fs::remove_all(dir);
}

TEST_CASE("eval of identical files gives EVA 1 and RMSE 0") {
  const auto dir = temp_dir("eval");
  write_file(dir / "g.csv", "ts_ms,deg\n100,1.5\n150,-2\n200,4.25\n250,0\n");
  const auto r = run({"eval", "--pred", (dir / "g.csv").string(), "--gt", (dir / "g.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("1.000 ± 0.000") != std::string::npos);
  CHECK(r.out.find("0.000 ± 0.000") != std::string::npos);

  write_file(dir / "p.csv", "ts_ms,deg\n100,0\n150,0\n200,0\n250,0\n");
  write_file(dir / "runs.csv",
             "tag,mode,pred,gt\nday,DVS,p.csv,g.csv\nday,APS,g.csv,g.csv\n");
  const auto t = run({"eval", "--runs", (dir / "runs.csv").string()});
  REQUIRE(t.code == kExitOk);
  CHECK(t.out.find("0.000 ± 0.000") != std::string::npos);

  write_file(dir / "short.csv", "ts_ms,deg\n100,0\n");
  CHECK(run({"eval", "--pred", (dir / "short.csv").string(), "--gt", (dir / "g.csv").string()}).code ==
        kExitProcessing);
  CHECK(run({"eval"}).code == kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("prep and export-frames end to end") {
  const auto dir = temp_dir("prep");
  std::vector<std::string> recs;
  for (int i = 0; i < 2; ++i) {
    const auto rec = (dir / ("r" + std::to_string(i) + ".ddrc")).string();
    REQUIRE(run({"simulate", "--duration", "4", "--seed", std::to_string(10 + i), "--lighting",
                 i ? "0.2" : "1", "--out", rec})
                .code == kExitOk);
    recs.push_back(rec);
  }
  const auto out_dir = (dir / "ds").string();
  std::vector<std::string> args = {"prep", recs[0], recs[1], "--out", out_dir, "--seed", "3"};
  const auto r = run(args);
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto kv = KeyValues::parse(r.out);
  const auto test = read_dataset((fs::path(out_dir) / "test.ddsm").string());
  const auto train = read_dataset((fs::path(out_dir) / "train.ddsm").string());
  CHECK(test.size() == kv.get_u64("test.count"));
  CHECK(train.size() == kv.get_u64("train.count"));
  const double sigma = kv.get_double("train.steering_sigma_deg");
  for (const auto& s : test) {
    CHECK(s.speed_kmh >= 15.0f);
    CHECK(std::abs(s.steering_deg) <= 3 * sigma + 1e-6);
  }
  // Causality per recording.
  for (const auto& id : {"sim-10", "sim-11"}) {
    std::uint64_t last_train = 0, first_test = UINT64_MAX;
    for (const auto& s : train) if (s.recording_id == id) last_train = std::max(last_train, s.window_end_ms);
    for (const auto& s : test) if (s.recording_id == id) first_test = std::min(first_test, s.window_end_ms);
    CHECK(last_train < first_test);
  }
  CHECK(fs::exists(fs::path(out_dir) / "test_labels.csv"));
  // Deterministic.
  const auto again = run(args);
  CHECK(again.out == r.out);

  const auto frames_dir = (dir / "frames").string();
  const auto e = run({"export-frames", recs[0], "--out", frames_dir, "--limit", "3"});
  REQUIRE_MESSAGE(e.code == kExitOk, e.err);
  CHECK(fs::exists(fs::path(frames_dir) / "dvs_000000.pgm"));
  CHECK(fs::exists(fs::path(frames_dir) / "aps_000002.pgm"));
  CHECK(fs::file_size(fs::path(frames_dir) / "dvs_000000.pgm") == 15 + 172 * 128);
  fs::remove_all(dir);
}

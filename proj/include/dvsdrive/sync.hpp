#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvsdrive/recording.hpp"

namespace dvsdrive {

class SyncError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Merge
// ============================================================================

/// Opens an independent byte stream over the same container on every call.
using SourceFactory = std::function<std::unique_ptr<std::istream>()>;

SourceFactory file_source(std::string path);
SourceFactory memory_source(std::shared_ptr<const std::string> bytes);

/// Host-time merge of the DVS, APS and VEHICLE streams of one container.
///
/// Each stream is read through its own reader, so the merge holds at most one
/// packet per stream regardless of how the file interleaves them. Output is
/// ordered by (host_ts_ms, stream id); within a stream, file order is kept.
class StreamMerger {
 public:
  explicit StreamMerger(const SourceFactory& open);

  const RecordingMeta& meta() const { return meta_; }
  std::optional<Packet> next();

 private:
  struct Lane {
    std::unique_ptr<std::istream> source;
    std::unique_ptr<RecordingReader> reader;
    std::optional<Packet> head;
  };
  void refill(Lane& lane);

  RecordingMeta meta_;
  std::array<Lane, kStreamCount> lanes_;
};

/// Stable sort by (host_ts_ms, stream id); for already-loaded packets.
std::vector<Packet> merge_packets(std::vector<Packet> packets);

// ============================================================================
// Windowing
// ============================================================================

enum class LabelMode { ZeroOrderHold, Linear };

struct SyncPolicy {
  LabelMode label_mode = LabelMode::ZeroOrderHold;
  std::uint64_t max_label_gap_ms = 200;
  std::uint64_t window_ms = 50;

  void validate() const;
};

struct WindowedRecord {
  std::uint64_t index = 0;  // window number counted from the first event
  std::uint64_t start_ms = 0;
  std::uint64_t end_ms = 0;  // exclusive; also the label time
  std::vector<Event> events;
  /// Most recent APS frame with host time before end_ms (shared when held).
  std::shared_ptr<const ApsFrame> frame;
  std::uint64_t frame_host_ms = 0;
  double steering_deg = 0.0;
  double speed_kmh = 0.0;
  /// Age of the older of the two label sources at end_ms; absent if none.
  std::optional<std::uint64_t> label_gap_ms;
  /// False when a label source is missing or older than max_label_gap_ms.
  bool label_valid = false;
};

struct SyncCounters {
  std::uint64_t windows = 0;
  std::uint64_t emitted = 0;
  std::uint64_t skipped_no_aps = 0;
  std::uint64_t skipped_events = 0;  // events inside skipped windows
  std::uint64_t flagged_label_gap = 0;
};

/// Splits a merged packet stream into consecutive half-open windows anchored at
/// the first DVS event, pairing each with the held APS frame and a steering and
/// speed label evaluated at the window end.
class Windower {
 public:
  explicit Windower(SyncPolicy policy);

  /// Packets must arrive in merged order.
  void push(Packet packet);
  /// Flushes all remaining windows.
  void finish();
  /// Completed records in window order.
  std::optional<WindowedRecord> pop();

  const SyncCounters& counters() const { return counters_; }

 private:
  struct Sample {
    std::uint64_t ts;
    double value;
  };
  struct Label {
    double value = 0.0;
    std::optional<std::uint64_t> gap;
  };
  struct Pending {
    WindowedRecord record;
    bool closed = false;
  };

  void open_until(std::uint64_t ts);
  void close_until(std::uint64_t ts);
  void resolve();
  bool label_ready(const Pending& w) const;
  Label label_at(const std::deque<Sample>& history, std::uint64_t t) const;
  void prune();

  SyncPolicy policy_;
  std::optional<std::uint64_t> anchor_;
  std::uint64_t next_index_ = 0;
  std::optional<std::uint64_t> last_event_index_;
  std::uint64_t now_ = 0;
  bool finished_ = false;
  std::deque<Pending> pending_;
  std::deque<WindowedRecord> ready_;
  std::shared_ptr<const ApsFrame> latest_frame_;
  std::uint64_t latest_frame_ms_ = 0;
  std::deque<Sample> steering_;
  std::deque<Sample> speed_;
  SyncCounters counters_;
};

std::vector<WindowedRecord> window_records(StreamMerger& merged, const SyncPolicy& policy,
                                           SyncCounters* counters = nullptr);
std::vector<WindowedRecord> window_records(const std::vector<Packet>& merged,
                                           const SyncPolicy& policy,
                                           SyncCounters* counters = nullptr);

}  // namespace dvsdrive

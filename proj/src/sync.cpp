#include "dvsdrive/sync.hpp"

#include <algorithm>
#include <fstream>
#include <streambuf>

namespace dvsdrive {

namespace {

class ConstBuffer : public std::streambuf {
 public:
  explicit ConstBuffer(std::shared_ptr<const std::string> bytes) : bytes_(std::move(bytes)) {
    char* base = const_cast<char*>(bytes_->data());
    setg(base, base, base + bytes_->size());
  }

 private:
  std::shared_ptr<const std::string> bytes_;
};

class MemoryStream : public std::istream {
 public:
  explicit MemoryStream(std::shared_ptr<const std::string> bytes)
      : std::istream(nullptr), buf_(std::move(bytes)) {
    rdbuf(&buf_);
  }

 private:
  ConstBuffer buf_;
};

bool merged_before(const Packet& a, const Packet& b) {
  if (a.host_ts_ms != b.host_ts_ms) return a.host_ts_ms < b.host_ts_ms;
  return a.stream < b.stream;
}

}  // namespace

SourceFactory file_source(std::string path) {
  return [path = std::move(path)]() -> std::unique_ptr<std::istream> {
    auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*in) throw RecordingError("cannot open " + path);
    return in;
  };
}

SourceFactory memory_source(std::shared_ptr<const std::string> bytes) {
  return [bytes = std::move(bytes)]() -> std::unique_ptr<std::istream> {
    return std::make_unique<MemoryStream>(bytes);
  };
}

// ============================================================================
// StreamMerger
// ============================================================================

StreamMerger::StreamMerger(const SourceFactory& open) {
  for (int s = 0; s < kStreamCount; ++s) {
    Lane& lane = lanes_[s];
    lane.source = open();
    // Unknown records are reported once, by the first lane.
    WarningHandler handler = nullptr;
    if (s > 0) handler = [](const std::string&) {};
    lane.reader = std::make_unique<RecordingReader>(*lane.source, handler);
    lane.reader->only(static_cast<StreamId>(s));
    refill(lane);
  }
  meta_ = lanes_[0].reader->meta();
}

void StreamMerger::refill(Lane& lane) { lane.head = lane.reader->next(); }

std::optional<Packet> StreamMerger::next() {
  Lane* best = nullptr;
  for (auto& lane : lanes_) {
    if (!lane.head) continue;
    if (!best || merged_before(*lane.head, *best->head)) best = &lane;
  }
  if (!best) return std::nullopt;
  Packet out = std::move(*best->head);
  refill(*best);
  return out;
}

std::vector<Packet> merge_packets(std::vector<Packet> packets) {
  std::stable_sort(packets.begin(), packets.end(), merged_before);
  return packets;
}

// ============================================================================
// Windower
// ============================================================================

void SyncPolicy::validate() const {
  if (max_label_gap_ms == 0) throw SyncError("max_label_gap_ms must be positive");
  if (window_ms == 0) throw SyncError("window_ms must be positive");
}

Windower::Windower(SyncPolicy policy) : policy_(policy) { policy_.validate(); }

void Windower::push(Packet packet) {
  if (finished_) throw SyncError("push after finish");
  const std::uint64_t ts = packet.host_ts_ms;
  if (ts < now_) {
    throw SyncError("packets out of merged order: " + std::to_string(ts) + " after " +
                    std::to_string(now_));
  }
  now_ = ts;

  if (packet.stream == StreamId::Dvs && !std::get<EventBatch>(packet.payload).empty() &&
      !anchor_) {
    anchor_ = ts;
  }
  open_until(ts);
  close_until(ts);

  switch (packet.stream) {
    case StreamId::Dvs: {
      auto& batch = std::get<EventBatch>(packet.payload);
      if (batch.empty()) break;
      auto& window = pending_.back().record;
      window.events.insert(window.events.end(), batch.begin(), batch.end());
      last_event_index_ = window.index;
      break;
    }
    case StreamId::Aps:
      latest_frame_ = std::make_shared<const ApsFrame>(std::move(std::get<ApsFrame>(packet.payload)));
      latest_frame_ms_ = ts;
      break;
    case StreamId::Vehicle: {
      const auto& s = std::get<VehicleSample>(packet.payload);
      if (s.channel == VehicleChannel::SteeringWheelAngle) steering_.push_back({ts, s.value});
      if (s.channel == VehicleChannel::VehicleSpeed) speed_.push_back({ts, s.value});
      break;
    }
  }
  resolve();
  prune();
}

// Windows exist for every instant from the anchor on; those after the last
// event stay tentative until a later event arrives.
void Windower::open_until(std::uint64_t ts) {
  if (!anchor_) return;
  while (*anchor_ + next_index_ * policy_.window_ms <= ts) {
    Pending w;
    w.record.index = next_index_;
    w.record.start_ms = *anchor_ + next_index_ * policy_.window_ms;
    w.record.end_ms = w.record.start_ms + policy_.window_ms;
    pending_.push_back(std::move(w));
    ++next_index_;
  }
}

void Windower::finish() {
  if (finished_) return;
  finished_ = true;
  close_until(UINT64_MAX);
  resolve();
  pending_.clear();
}

std::optional<WindowedRecord> Windower::pop() {
  if (ready_.empty()) return std::nullopt;
  WindowedRecord r = std::move(ready_.front());
  ready_.pop_front();
  return r;
}

// Everything with host time < end has been seen once a packet at >= end
// arrives, so the held frame is final.
void Windower::close_until(std::uint64_t ts) {
  for (auto& w : pending_) {
    if (w.closed) continue;
    if (w.record.end_ms > ts) break;
    w.closed = true;
    w.record.frame = latest_frame_;
    w.record.frame_host_ms = latest_frame_ ? latest_frame_ms_ : 0;
  }
}

bool Windower::label_ready(const Pending& w) const {
  if (!w.closed || !last_event_index_ || w.record.index > *last_event_index_) return false;
  if (finished_) return true;
  const std::uint64_t end = w.record.end_ms;
  // Samples stamped exactly at end may still follow in the merged order.
  if (now_ <= end) return false;
  if (policy_.label_mode == LabelMode::ZeroOrderHold) return true;
  auto has_later = [end](const std::deque<Sample>& h) {
    return !h.empty() && h.back().ts > end;
  };
  return (has_later(steering_) && has_later(speed_)) || now_ > end + policy_.max_label_gap_ms;
}

Windower::Label Windower::label_at(const std::deque<Sample>& history, std::uint64_t t) const {
  const auto after = std::upper_bound(history.begin(), history.end(), t,
                                      [](std::uint64_t v, const Sample& s) { return v < s.ts; });
  if (after == history.begin()) return {};
  const Sample& prev = *(after - 1);
  Label label{prev.value, t - prev.ts};
  if (policy_.label_mode == LabelMode::Linear && after != history.end() && prev.ts < t) {
    const double f = static_cast<double>(t - prev.ts) / static_cast<double>(after->ts - prev.ts);
    label.value = prev.value + f * (after->value - prev.value);
  }
  return label;
}

void Windower::resolve() {
  while (!pending_.empty() && label_ready(pending_.front())) {
    WindowedRecord r = std::move(pending_.front().record);
    pending_.pop_front();
    ++counters_.windows;
    if (!r.frame) {
      ++counters_.skipped_no_aps;
      counters_.skipped_events += r.events.size();
      continue;
    }
    const Label steer = label_at(steering_, r.end_ms);
    const Label speed = label_at(speed_, r.end_ms);
    r.steering_deg = steer.value;
    r.speed_kmh = speed.value;
    if (steer.gap && speed.gap) r.label_gap_ms = std::max(*steer.gap, *speed.gap);
    r.label_valid = r.label_gap_ms && *r.label_gap_ms <= policy_.max_label_gap_ms;
    if (!r.label_valid) ++counters_.flagged_label_gap;
    ++counters_.emitted;
    ready_.push_back(std::move(r));
  }
}

// Keep only the newest sample at or before the oldest label time still needed.
void Windower::prune() {
  const std::uint64_t bound = pending_.empty() ? now_ : std::min(now_, pending_.front().record.end_ms);
  for (auto* h : {&steering_, &speed_}) {
    while (h->size() >= 2 && (*h)[1].ts <= bound) h->pop_front();
  }
}

std::vector<WindowedRecord> window_records(StreamMerger& merged, const SyncPolicy& policy,
                                           SyncCounters* counters) {
  Windower windower(policy);
  std::vector<WindowedRecord> out;
  while (auto p = merged.next()) {
    windower.push(std::move(*p));
    while (auto r = windower.pop()) out.push_back(std::move(*r));
  }
  windower.finish();
  while (auto r = windower.pop()) out.push_back(std::move(*r));
  if (counters) *counters = windower.counters();
  return out;
}

std::vector<WindowedRecord> window_records(const std::vector<Packet>& merged,
                                           const SyncPolicy& policy, SyncCounters* counters) {
  Windower windower(policy);
  std::vector<WindowedRecord> out;
  for (const auto& p : merged) {
    windower.push(p);
    while (auto r = windower.pop()) out.push_back(std::move(*r));
  }
  windower.finish();
  while (auto r = windower.pop()) out.push_back(std::move(*r));
  if (counters) *counters = windower.counters();
  return out;
}

}  // namespace dvsdrive

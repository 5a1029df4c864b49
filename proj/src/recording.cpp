#include "dvsdrive/recording.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "byteio.hpp"
#include "dvsdrive/keyvalue.hpp"

namespace dvsdrive {

using byteio::get_le;
using byteio::put_le;

std::string_view channel_name(VehicleChannel c) {
  switch (c) {
    case VehicleChannel::AcceleratorPedal: return "accelerator_pedal_position";
    case VehicleChannel::BrakePedal: return "brake_pedal_status";
    case VehicleChannel::EngineSpeed: return "engine_speed";
    case VehicleChannel::Headlamp: return "headlamp_status";
    case VehicleChannel::Latitude: return "latitude";
    case VehicleChannel::Longitude: return "longitude";
    case VehicleChannel::Odometer: return "odometer";
    case VehicleChannel::SteeringWheelAngle: return "steering_wheel_angle";
    case VehicleChannel::TransmissionGear: return "transmission_gear_position";
    case VehicleChannel::VehicleSpeed: return "vehicle_speed";
    case VehicleChannel::WindshieldWiper: return "windshield_wiper_status";
  }
  return "unknown";
}

bool is_valid_channel(std::uint8_t raw) { return raw >= 1 && raw <= kVehicleChannelCount; }

std::optional<std::string> validate_vehicle_sample(const VehicleSample& s) {
  if (!is_valid_channel(static_cast<std::uint8_t>(s.channel))) return "unknown vehicle channel";
  const double v = s.value;
  if (!std::isfinite(v)) return "non-finite vehicle value";
  auto out_of = [&](double lo, double hi) -> std::optional<std::string> {
    if (v < lo || v > hi) {
      std::ostringstream ss;
      ss << channel_name(s.channel) << " value " << v << " outside [" << lo << ", " << hi << "]";
      return ss.str();
    }
    return std::nullopt;
  };
  switch (s.channel) {
    case VehicleChannel::SteeringWheelAngle: return out_of(-720.0, 720.0);
    case VehicleChannel::VehicleSpeed: return out_of(0.0, 160.0);
    case VehicleChannel::AcceleratorPedal: return out_of(0.0, 100.0);
    case VehicleChannel::BrakePedal:
    case VehicleChannel::Headlamp:
    case VehicleChannel::WindshieldWiper:
      if (v != 0.0 && v != 1.0) return std::string(channel_name(s.channel)) + " must be 0 or 1";
      return std::nullopt;
    default: return std::nullopt;
  }
}

std::string_view stream_name(StreamId s) {
  switch (s) {
    case StreamId::Dvs: return "dvs";
    case StreamId::Aps: return "aps";
    case StreamId::Vehicle: return "vehicle";
  }
  return "unknown";
}

FormatError::FormatError(const std::string& what, std::uint64_t offset)
    : RecordingError(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

TruncatedError::TruncatedError(std::uint64_t offset)
    : RecordingError("truncated record at byte offset " + std::to_string(offset)),
      offset_(offset) {}

InvalidPacketError::InvalidPacketError(const std::string& what, std::size_t index)
    : RecordingError("packet " + std::to_string(index) + ": " + what), index_(index) {}

// ============================================================================
// Meta
// ============================================================================

std::string encode_meta(const RecordingMeta& meta) {
  for (const auto* field : {&meta.id, &meta.scenario}) {
    if (field->find('\n') != std::string::npos) {
      throw RecordingError("recording meta values may not contain newlines");
    }
  }
  // Fixed key order keeps the header bit-exact.
  std::string out;
  out += "width=" + std::to_string(meta.width) + "\n";
  out += "height=" + std::to_string(meta.height) + "\n";
  out += "id=" + meta.id + "\n";
  out += "scenario=" + meta.scenario + "\n";
  out += "created_ms=" + std::to_string(meta.created_ms) + "\n";
  return out;
}

RecordingMeta decode_meta(std::string_view text) {
  const auto kv = KeyValues::parse(text);
  RecordingMeta meta;
  const auto w = kv.get_u64("width");
  const auto h = kv.get_u64("height");
  if (w == 0 || h == 0 || w > 0xFFFF || h > 0xFFFF) {
    throw ConfigError("sensor width/height out of range");
  }
  meta.width = static_cast<std::uint16_t>(w);
  meta.height = static_cast<std::uint16_t>(h);
  meta.id = kv.get_or("id", "");
  meta.scenario = kv.get_or("scenario", "");
  meta.created_ms = kv.get_u64_or("created_ms", 0);
  return meta;
}

// ============================================================================
// Writer
// ============================================================================

std::size_t payload_size(const Payload& payload) {
  struct Visitor {
    std::size_t operator()(const EventBatch& b) const { return 2 + b.size() * kEventBytes; }
    std::size_t operator()(const ApsFrame& f) const {
      return kApsFixedBytes + static_cast<std::size_t>(f.width) * f.height * 2;
    }
    std::size_t operator()(const VehicleSample&) const { return kVehicleBytes; }
  };
  return std::visit(Visitor{}, payload);
}

namespace {

std::optional<std::string> check_packet(const Packet& p, const RecordingMeta& meta) {
  const auto expected = static_cast<std::size_t>(p.stream);
  if (expected >= kStreamCount || p.payload.index() != expected) {
    return "stream id does not match payload type";
  }
  if (const auto* batch = std::get_if<EventBatch>(&p.payload)) {
    if (batch->size() > kMaxEventsPerPacket) {
      return "event batch of " + std::to_string(batch->size()) + " exceeds " +
             std::to_string(kMaxEventsPerPacket) + " events";
    }
    for (std::size_t i = 0; i < batch->size(); ++i) {
      const Event& e = (*batch)[i];
      if (e.x >= meta.width || e.y >= meta.height) {
        return "event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
               std::to_string(e.y) + ") outside sensor";
      }
      if (e.polarity != 1 && e.polarity != -1) {
        return "event " + std::to_string(i) + " has polarity " + std::to_string(e.polarity);
      }
    }
  } else if (const auto* frame = std::get_if<ApsFrame>(&p.payload)) {
    if (frame->width == 0 || frame->height == 0) return "empty APS frame";
    if (frame->pixels.size() != static_cast<std::size_t>(frame->width) * frame->height) {
      return "APS pixel count does not match width x height";
    }
  } else if (const auto reason = validate_vehicle_sample(std::get<VehicleSample>(p.payload))) {
    return reason;
  }
  if (payload_size(p.payload) > kMaxPayloadBytes) {
    return "payload of " + std::to_string(payload_size(p.payload)) + " bytes exceeds bound";
  }
  return std::nullopt;
}

void encode_payload(std::string& out, const Payload& payload) {
  if (const auto* batch = std::get_if<EventBatch>(&payload)) {
    put_le(out, static_cast<std::uint16_t>(batch->size()));
    for (const Event& e : *batch) {
      put_le(out, e.x);
      put_le(out, e.y);
      put_le(out, e.polarity);
      put_le(out, e.device_ts_us);
    }
  } else if (const auto* f = std::get_if<ApsFrame>(&payload)) {
    put_le(out, f->width);
    put_le(out, f->height);
    put_le(out, f->exposure_us);
    put_le(out, f->device_ts_us);
    for (const auto px : f->pixels) put_le(out, px);
  } else {
    const auto& s = std::get<VehicleSample>(payload);
    put_le(out, static_cast<std::uint8_t>(s.channel));
    byteio::put_f64(out, s.value);
  }
}

}  // namespace

RecordingWriter::RecordingWriter(std::ostream& sink, RecordingMeta meta)
    : sink_(sink), meta_(std::move(meta)) {
  if (meta_.width == 0 || meta_.height == 0) {
    throw RecordingError("sensor width and height must be positive");
  }
  const std::string meta_text = encode_meta(meta_);
  std::string header(kContainerMagic.begin(), kContainerMagic.end());
  put_le(header, kContainerVersion);
  put_le(header, static_cast<std::uint32_t>(meta_text.size()));
  header += meta_text;
  put(header);
}

void RecordingWriter::put(const std::string& bytes) {
  sink_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink_) {
    throw RecordingError("write failed at byte offset " + std::to_string(bytes_));
  }
  bytes_ += bytes.size();
}

void RecordingWriter::write(const Packet& packet) {
  const std::size_t index = packets_;
  if (const auto reason = check_packet(packet, meta_)) {
    throw InvalidPacketError(*reason, index);
  }
  auto& last = last_ts_[static_cast<int>(packet.stream)];
  if (last && packet.host_ts_ms < *last) {
    throw InvalidPacketError(std::string(stream_name(packet.stream)) + " host_ts_ms " +
                                 std::to_string(packet.host_ts_ms) + " precedes " +
                                 std::to_string(*last),
                             index);
  }
  scratch_.clear();
  put_le(scratch_, static_cast<std::uint8_t>(packet.stream));
  put_le(scratch_, packet.host_ts_ms);
  put_le(scratch_, static_cast<std::uint32_t>(payload_size(packet.payload)));
  encode_payload(scratch_, packet.payload);
  put(scratch_);
  last = packet.host_ts_ms;
  ++packets_;
}

std::uint64_t write_recording(const RecordingMeta& meta, std::span<const Packet> packets,
                              std::ostream& sink) {
  RecordingWriter writer(sink, meta);
  for (const Packet& p : packets) writer.write(p);
  return writer.bytes_written();
}

std::vector<Packet> split_event_batch(std::uint64_t host_ts_ms, std::span<const Event> events) {
  std::vector<Packet> out;
  for (std::size_t i = 0; i < events.size(); i += kMaxEventsPerPacket) {
    const auto n = std::min(kMaxEventsPerPacket, events.size() - i);
    const auto chunk = events.subspan(i, n);
    out.push_back(Packet::events(host_ts_ms, EventBatch(chunk.begin(), chunk.end())));
  }
  return out;
}

// ============================================================================
// Reader
// ============================================================================

RecordingReader::RecordingReader(std::istream& source, WarningHandler on_warning)
    : in_(source), on_warning_(std::move(on_warning)) {
  char fixed[kHeaderFixedBytes];
  in_.read(fixed, 4);
  if (in_.gcount() != 4 || !std::equal(kContainerMagic.begin(), kContainerMagic.end(), fixed)) {
    throw FormatError("unsupported format: missing DDRC magic", 0);
  }
  if (!read_exact(fixed + 4, kHeaderFixedBytes - 4)) {
    offset_ = 0;
    throw TruncatedError(0);
  }
  const auto version = get_le<std::uint16_t>(fixed + 4);
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  }
  const auto meta_len = get_le<std::uint32_t>(fixed + 6);
  if (meta_len > kMaxPayloadBytes) throw FormatError("meta block too large", 6);
  std::string meta_text(meta_len, '\0');
  if (!read_exact(meta_text.data(), meta_len)) throw TruncatedError(0);
  try {
    meta_ = decode_meta(meta_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad meta block: ") + e.what(), kHeaderFixedBytes);
  }
  offset_ = kHeaderFixedBytes + meta_len;
}

bool RecordingReader::read_exact(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in_.gcount()) == n;
}

void RecordingReader::warn(const std::string& msg) {
  if (on_warning_) {
    on_warning_(msg);
  } else {
    std::cerr << "warning: " << msg << "\n";
  }
}

std::optional<Packet> RecordingReader::next() {
  while (true) {
    const std::uint64_t record_start = offset_;
    char framing[kRecordFramingBytes];
    in_.read(framing, 1);
    if (in_.gcount() == 0) return std::nullopt;
    if (!read_exact(framing + 1, kRecordFramingBytes - 1)) throw TruncatedError(record_start);

    const auto raw_stream = static_cast<std::uint8_t>(framing[0]);
    const auto host_ts = get_le<std::uint64_t>(framing + 1);
    const auto len = get_le<std::uint32_t>(framing + 9);
    if (len > kMaxPayloadBytes) {
      throw FormatError("payload length " + std::to_string(len) + " exceeds bound", record_start);
    }

    const bool unknown = raw_stream >= kStreamCount;
    if (unknown || (filter_ && static_cast<std::uint8_t>(*filter_) != raw_stream)) {
      in_.ignore(len);
      if (static_cast<std::uint32_t>(in_.gcount()) != len) throw TruncatedError(record_start);
      offset_ = record_start + kRecordFramingBytes + len;
      if (unknown) {
        ++unknown_skipped_;
        warn("skipping record with unknown stream id " + std::to_string(raw_stream) +
             " at byte offset " + std::to_string(record_start));
      }
      continue;
    }

    buf_.resize(len);
    if (!read_exact(buf_.data(), len)) throw TruncatedError(record_start);
    offset_ = record_start + kRecordFramingBytes + len;
    const char* p = buf_.data();

    Packet packet;
    packet.stream = static_cast<StreamId>(raw_stream);
    packet.host_ts_ms = host_ts;
    switch (packet.stream) {
      case StreamId::Dvs: {
        if (len < 2) throw FormatError("short DVS payload", record_start);
        const auto count = get_le<std::uint16_t>(p);
        if (len != 2 + count * kEventBytes) {
          throw FormatError("DVS payload length does not match event count", record_start);
        }
        EventBatch batch(count);
        p += 2;
        for (auto& e : batch) {
          e.x = get_le<std::uint16_t>(p);
          e.y = get_le<std::uint16_t>(p + 2);
          e.polarity = get_le<std::int8_t>(p + 4);
          e.device_ts_us = get_le<std::uint64_t>(p + 5);
          p += kEventBytes;
          if (e.x >= meta_.width || e.y >= meta_.height || (e.polarity != 1 && e.polarity != -1)) {
            throw FormatError("invalid DVS event", record_start);
          }
        }
        packet.payload = std::move(batch);
        break;
      }
      case StreamId::Aps: {
        if (len < kApsFixedBytes) throw FormatError("short APS payload", record_start);
        ApsFrame f;
        f.width = get_le<std::uint16_t>(p);
        f.height = get_le<std::uint16_t>(p + 2);
        f.exposure_us = get_le<std::uint32_t>(p + 4);
        f.device_ts_us = get_le<std::uint64_t>(p + 8);
        const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
        if (len != kApsFixedBytes + 2 * n) {
          throw FormatError("APS payload length does not match frame size", record_start);
        }
        f.pixels.resize(n);
        p += kApsFixedBytes;
        for (auto& px : f.pixels) {
          px = get_le<std::uint16_t>(p);
          p += 2;
        }
        packet.payload = std::move(f);
        break;
      }
      case StreamId::Vehicle: {
        if (len != kVehicleBytes) throw FormatError("bad VEHICLE payload length", record_start);
        const auto channel = get_le<std::uint8_t>(p);
        if (!is_valid_channel(channel)) {
          throw FormatError("unknown vehicle channel " + std::to_string(channel), record_start);
        }
        packet.payload = VehicleSample{static_cast<VehicleChannel>(channel), byteio::get_f64(p + 1)};
        break;
      }
    }
    return packet;
  }
}

Recording read_recording(std::istream& source, WarningHandler on_warning) {
  RecordingReader reader(source, std::move(on_warning));
  Recording rec{reader.meta(), {}};
  while (auto p = reader.next()) rec.packets.push_back(std::move(*p));
  return rec;
}

// ============================================================================
// Statistics
// ============================================================================

namespace {

void observe(StreamSummary& s, std::uint64_t ts) {
  ++s.packets;
  if (!s.first_ms) s.first_ms = ts;
  s.last_ms = ts;
}

void finish(StreamSummary& s) {
  if (s.packets >= 2 && *s.last_ms > *s.first_ms) {
    s.rate_hz = static_cast<double>(s.packets - 1) * 1000.0 /
                static_cast<double>(*s.last_ms - *s.first_ms);
  }
}

void format_summary(std::ostringstream& ss, const std::string& prefix, const StreamSummary& s) {
  ss << prefix << ".packets=" << s.packets << "\n";
  if (s.first_ms) ss << prefix << ".first_ms=" << *s.first_ms << "\n";
  if (s.last_ms) ss << prefix << ".last_ms=" << *s.last_ms << "\n";
  if (s.rate_hz) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *s.rate_hz);
    ss << prefix << ".rate_hz=" << buf << "\n";
  }
}

}  // namespace

StreamStats stream_stats(RecordingReader& reader) {
  StreamStats stats;
  while (auto p = reader.next()) {
    observe(stats.streams[static_cast<int>(p->stream)], p->host_ts_ms);
    if (const auto* batch = std::get_if<EventBatch>(&p->payload)) {
      stats.dvs_events += batch->size();
    } else if (const auto* s = std::get_if<VehicleSample>(&p->payload)) {
      observe(stats.vehicle_channels[static_cast<int>(s->channel) - 1], p->host_ts_ms);
    }
  }
  for (auto& s : stats.streams) finish(s);
  for (auto& s : stats.vehicle_channels) finish(s);
  stats.unknown_records_skipped = reader.unknown_records_skipped();
  return stats;
}

std::string format_stats(const RecordingMeta& meta, const StreamStats& stats) {
  std::ostringstream ss;
  ss << "id=" << meta.id << "\n"
     << "scenario=" << meta.scenario << "\n"
     << "width=" << meta.width << "\n"
     << "height=" << meta.height << "\n"
     << "created_ms=" << meta.created_ms << "\n";
  for (int i = 0; i < kStreamCount; ++i) {
    format_summary(ss, std::string(stream_name(static_cast<StreamId>(i))), stats.streams[i]);
  }
  ss << "dvs.events=" << stats.dvs_events << "\n";
  for (int c = 1; c <= kVehicleChannelCount; ++c) {
    const auto& s = stats.vehicle_channels[c - 1];
    if (s.packets == 0) continue;
    format_summary(ss, "vehicle." + std::string(channel_name(static_cast<VehicleChannel>(c))), s);
  }
  ss << "unknown_records_skipped=" << stats.unknown_records_skipped << "\n";
  return ss.str();
}

}  // namespace dvsdrive

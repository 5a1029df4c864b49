/**
 * Recording data model and the DDRC container codec.
 *
 * A container is a flat little-endian record log:
 *
 *   header : "DDRC" | version u16 (=1) | meta_len u32 | meta (UTF-8 key=value lines)
 *   record : stream_id u8 | host_ts_ms u64 | payload_len u32 | payload
 *
 *   DVS     : count u16 | count x (x u16 | y u16 | polarity i8 | device_ts_us u64)
 *   APS     : width u16 | height u16 | exposure_us u32 | device_ts_us u64 | w*h x u16
 *   VEHICLE : channel u8 (1..11) | value f64
 *
 * Records are read sequentially; nothing beyond the current packet is held
 * in memory. Unknown stream ids are skipped.
 */

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dvsdrive {

// ============================================================================
// Domain types
// ============================================================================

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  // +1 ON, -1 OFF
  std::uint64_t device_ts_us = 0;

  bool operator==(const Event&) const = default;
};

/// 10-bit ADC values stored in 16 bits, row-major.
struct ApsFrame {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint32_t exposure_us = 0;
  std::uint64_t device_ts_us = 0;
  std::vector<std::uint16_t> pixels;

  std::uint16_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const ApsFrame&) const = default;
};

/// Vehicle telemetry channels, numbered as on the wire.
enum class VehicleChannel : std::uint8_t {
  AcceleratorPedal = 1,  // percent 0..100
  BrakePedal = 2,        // binary
  EngineSpeed = 3,       // rpm
  Headlamp = 4,          // binary
  Latitude = 5,          // degrees
  Longitude = 6,         // degrees
  Odometer = 7,          // km
  SteeringWheelAngle = 8,  // degrees, +-720
  TransmissionGear = 9,  // 1..6
  VehicleSpeed = 10,     // km/h 0..160
  WindshieldWiper = 11,  // binary
};

inline constexpr int kVehicleChannelCount = 11;

std::string_view channel_name(VehicleChannel c);
bool is_valid_channel(std::uint8_t raw);

struct VehicleSample {
  VehicleChannel channel = VehicleChannel::SteeringWheelAngle;
  double value = 0.0;

  bool operator==(const VehicleSample&) const = default;
};

/// Checks the per-channel value range; returns a reason when violated.
std::optional<std::string> validate_vehicle_sample(const VehicleSample& s);

enum class StreamId : std::uint8_t { Dvs = 0, Aps = 1, Vehicle = 2 };
inline constexpr int kStreamCount = 3;

std::string_view stream_name(StreamId s);

using EventBatch = std::vector<Event>;
using Payload = std::variant<EventBatch, ApsFrame, VehicleSample>;

struct Packet {
  StreamId stream = StreamId::Dvs;
  std::uint64_t host_ts_ms = 0;
  Payload payload;

  bool operator==(const Packet&) const = default;

  static Packet events(std::uint64_t host_ts_ms, EventBatch batch) {
    return {StreamId::Dvs, host_ts_ms, std::move(batch)};
  }
  static Packet frame(std::uint64_t host_ts_ms, ApsFrame f) {
    return {StreamId::Aps, host_ts_ms, std::move(f)};
  }
  static Packet vehicle(std::uint64_t host_ts_ms, VehicleSample s) {
    return {StreamId::Vehicle, host_ts_ms, s};
  }
};

struct RecordingMeta {
  std::uint16_t width = 346;
  std::uint16_t height = 260;
  std::string id;
  std::string scenario;
  std::uint64_t created_ms = 0;

  bool operator==(const RecordingMeta&) const = default;
};

// ============================================================================
// Format constants
// ============================================================================

inline constexpr std::array<char, 4> kContainerMagic = {'D', 'D', 'R', 'C'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderFixedBytes = 4 + 2 + 4;
inline constexpr std::size_t kRecordFramingBytes = 1 + 8 + 4;
inline constexpr std::size_t kEventBytes = 2 + 2 + 1 + 8;
inline constexpr std::size_t kApsFixedBytes = 2 + 2 + 4 + 8;
inline constexpr std::size_t kVehicleBytes = 1 + 8;
inline constexpr std::size_t kMaxEventsPerPacket = 65535;
/// Largest payload accepted by the writer and the reader (a 4096x4096 frame fits).
inline constexpr std::uint32_t kMaxPayloadBytes = 64u << 20;

// ============================================================================
// Errors
// ============================================================================

class RecordingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, unsupported version, or structurally invalid record.
class FormatError : public RecordingError {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Input ended inside a record. offset() is where the incomplete record starts.
class TruncatedError : public RecordingError {
 public:
  explicit TruncatedError(std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Rejected by the writer. index() is the position in the packet sequence.
class InvalidPacketError : public RecordingError {
 public:
  InvalidPacketError(const std::string& what, std::size_t index);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// ============================================================================
// Writing
// ============================================================================

std::string encode_meta(const RecordingMeta& meta);
RecordingMeta decode_meta(std::string_view text);

/// Encoded payload size in bytes, without record framing.
std::size_t payload_size(const Payload& payload);

/// Streaming container writer. Enforces non-decreasing host time per stream.
class RecordingWriter {
 public:
  RecordingWriter(std::ostream& sink, RecordingMeta meta);

  void write(const Packet& packet);
  std::uint64_t bytes_written() const { return bytes_; }
  std::size_t packets_written() const { return packets_; }
  const RecordingMeta& meta() const { return meta_; }

 private:
  void put(const std::string& bytes);

  std::ostream& sink_;
  RecordingMeta meta_;
  std::array<std::optional<std::uint64_t>, kStreamCount> last_ts_{};
  std::uint64_t bytes_ = 0;
  std::size_t packets_ = 0;
  std::string scratch_;
};

std::uint64_t write_recording(const RecordingMeta& meta, std::span<const Packet> packets,
                              std::ostream& sink);

/// Splits a burst into DVS packets of at most kMaxEventsPerPacket events.
std::vector<Packet> split_event_batch(std::uint64_t host_ts_ms, std::span<const Event> events);

// ============================================================================
// Reading
// ============================================================================

using WarningHandler = std::function<void(const std::string&)>;

/// Sequential single-consumer reader. The header is parsed on construction.
class RecordingReader {
 public:
  /// A null handler prints warnings to stderr.
  explicit RecordingReader(std::istream& source, WarningHandler on_warning = nullptr);

  const RecordingMeta& meta() const { return meta_; }

  /// Next packet in file order; nullopt at clean end of input.
  /// Throws TruncatedError if the input stops inside a record.
  std::optional<Packet> next();

  /// Restricts next() to one stream; other records are skipped undecoded.
  void only(StreamId stream) { filter_ = stream; }

  std::uint64_t offset() const { return offset_; }
  std::size_t unknown_records_skipped() const { return unknown_skipped_; }

 private:
  bool read_exact(char* dst, std::size_t n);
  void warn(const std::string& msg);

  std::istream& in_;
  WarningHandler on_warning_;
  RecordingMeta meta_;
  std::uint64_t offset_ = 0;
  std::size_t unknown_skipped_ = 0;
  std::optional<StreamId> filter_;
  std::string buf_;
};

struct Recording {
  RecordingMeta meta;
  std::vector<Packet> packets;
};

/// Reads the entire container into memory. Intended for tests and small files.
Recording read_recording(std::istream& source, WarningHandler on_warning = nullptr);

// ============================================================================
// Statistics
// ============================================================================

struct StreamSummary {
  std::size_t packets = 0;
  std::optional<std::uint64_t> first_ms;
  std::optional<std::uint64_t> last_ms;
  /// (packets - 1) / span; absent with fewer than two packets or a zero span.
  std::optional<double> rate_hz;
};

struct StreamStats {
  std::array<StreamSummary, kStreamCount> streams;
  std::array<StreamSummary, kVehicleChannelCount> vehicle_channels;
  std::uint64_t dvs_events = 0;
  std::size_t unknown_records_skipped = 0;

  const StreamSummary& stream(StreamId s) const { return streams[static_cast<int>(s)]; }
  const StreamSummary& channel(VehicleChannel c) const {
    return vehicle_channels[static_cast<int>(c) - 1];
  }
};

/// Consumes the reader.
StreamStats stream_stats(RecordingReader& reader);

/// Plain-text key=value report.
std::string format_stats(const RecordingMeta& meta, const StreamStats& stats);

}  // namespace dvsdrive

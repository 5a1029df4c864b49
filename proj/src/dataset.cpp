#include "dvsdrive/dataset.hpp"

#include <algorithm>
#include <sstream>

#include "byteio.hpp"

namespace dvsdrive {

void PrepStats::write_to(KeyValues& kv, const std::string& prefix) const {
  std::ostringstream sigma;
  sigma.precision(9);
  sigma << steering_sigma;
  kv.set(prefix + ".steering_sigma_deg", sigma.str());
  kv.set(prefix + ".input", std::to_string(input));
  kv.set(prefix + ".dropped_speed", std::to_string(dropped_speed));
  kv.set(prefix + ".dropped_steering", std::to_string(dropped_steering));
  kv.set(prefix + ".dropped_rebalance", std::to_string(dropped_rebalance));
  kv.set(prefix + ".retained", std::to_string(retained));
  std::ostringstream frac;
  frac.precision(4);
  frac << retained_fraction();
  kv.set(prefix + ".retained_fraction", frac.str());
}

SampleLabel label_of(const WindowedRecord& record, const std::string& recording_id) {
  return {recording_id, record.index, record.end_ms, static_cast<float>(record.steering_deg),
          static_cast<float>(record.speed_kmh)};
}

namespace {

std::vector<float> to_float(const NormalizedImage& img) {
  return std::vector<float>(img.values.begin(), img.values.end());
}

}  // namespace

LabeledSample make_sample(const WindowedRecord& record, const std::string& recording_id,
                          int sensor_width, int sensor_height) {
  if (!record.frame) throw DatasetError("window has no paired APS frame");
  LabeledSample s;
  s.dvs = to_float(downsample(normalize_dvs(accumulate_dvs(record.events, sensor_width, sensor_height))));
  s.aps = to_float(downsample(normalize_aps(*record.frame)));
  s.steering_deg = static_cast<float>(record.steering_deg);
  s.speed_kmh = static_cast<float>(record.speed_kmh);
  s.recording_id = recording_id;
  s.window_end_ms = record.end_ms;
  return s;
}

std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".manifest"; }
std::string index_path(const std::string& dataset_path) { return dataset_path + ".index"; }

// ============================================================================
// Writer
// ============================================================================

namespace {

std::string encode_header(std::uint32_t count) {
  std::string h(kDatasetMagic.begin(), kDatasetMagic.end());
  byteio::put_le(h, kDatasetVersion);
  byteio::put_le(h, count);
  h.append(kDatasetHeaderBytes - h.size(), '\0');
  return h;
}

}  // namespace

DatasetWriter::DatasetWriter(std::string path) : path_(std::move(path)) {
  out_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::trunc);
  if (!*out_) fail("cannot open for writing");
  const std::string header = encode_header(0);
  out_->write(header.data(), static_cast<std::streamsize>(header.size()));
  if (!*out_) fail("header write failed");
  offset_ = header.size();
  index_ = std::make_unique<std::ofstream>(index_path(path_), std::ios::binary | std::ios::trunc);
  if (!*index_) throw DatasetError(index_path(path_) + ": cannot open for writing");
  *index_ << "recording_id,window_end_ms\n";
}

DatasetWriter::~DatasetWriter() {
  if (out_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void DatasetWriter::fail(const std::string& what) const {
  throw DatasetError(path_ + ": " + what + " at byte offset " + std::to_string(offset_));
}

void DatasetWriter::write(const LabeledSample& s) {
  if (!out_) throw DatasetError(path_ + ": write after close");
  if (s.dvs.size() != kImagePixels || s.aps.size() != kImagePixels) {
    throw DatasetError("sample images must be " + std::to_string(kNetWidth) + "x" +
                       std::to_string(kNetHeight));
  }
  if (s.recording_id.find_first_of(",\n") != std::string::npos) {
    throw DatasetError("recording id may not contain ',' or newline");
  }
  if (count_ == UINT32_MAX) fail("record count overflow");
  std::string rec;
  rec.reserve(kDatasetRecordBytes);
  byteio::put_f32(rec, s.steering_deg);
  byteio::put_f32(rec, s.speed_kmh);
  for (const float v : s.dvs) byteio::put_f32(rec, v);
  for (const float v : s.aps) byteio::put_f32(rec, v);
  out_->write(rec.data(), static_cast<std::streamsize>(rec.size()));
  if (!*out_) fail("record write failed");
  offset_ += rec.size();
  *index_ << s.recording_id << "," << s.window_end_ms << "\n";
  ++count_;
}

std::uint32_t DatasetWriter::close() {
  if (!out_) return count_;
  const std::string header = encode_header(count_);
  out_->seekp(0);
  out_->write(header.data(), static_cast<std::streamsize>(header.size()));
  out_->flush();
  const bool ok = static_cast<bool>(*out_);
  out_.reset();
  index_->flush();
  const bool index_ok = static_cast<bool>(*index_);
  index_.reset();
  if (!ok) throw DatasetError(path_ + ": header update failed at byte offset 0");
  if (!index_ok) throw DatasetError(index_path(path_) + ": write failed");
  return count_;
}

KeyValues dataset_manifest(std::uint32_t count, const KeyValues& extra) {
  KeyValues manifest = extra;
  manifest.set("format", "DDSM");
  manifest.set("version", std::to_string(kDatasetVersion));
  manifest.set("count", std::to_string(count));
  manifest.set("record_bytes", std::to_string(kDatasetRecordBytes));
  manifest.set("image_width", std::to_string(kNetWidth));
  manifest.set("image_height", std::to_string(kNetHeight));
  return manifest;
}

void write_manifest(const std::string& dataset_path, const KeyValues& manifest) {
  const std::string path = manifest_path(dataset_path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << manifest.to_string();
  if (!out) throw DatasetError(path + ": write failed");
}

KeyValues export_dataset(std::span<const LabeledSample> samples, const std::string& path,
                         const KeyValues& extra) {
  if (samples.empty()) throw DatasetError("refusing to export an empty dataset to " + path);
  DatasetWriter writer(path);
  for (const auto& s : samples) writer.write(s);
  const auto count = writer.close();

  KeyValues manifest = dataset_manifest(count, extra);
  write_manifest(path, manifest);
  return manifest;
}

// ============================================================================
// Reader
// ============================================================================

std::vector<LabeledSample> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(path + ": cannot open");
  char header[kDatasetHeaderBytes];
  in.read(header, kDatasetHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kDatasetHeaderBytes) ||
      !std::equal(kDatasetMagic.begin(), kDatasetMagic.end(), header)) {
    throw DatasetError(path + ": not a DDSM file");
  }
  const auto version = byteio::get_le<std::uint16_t>(header + 4);
  if (version != kDatasetVersion) {
    throw DatasetError(path + ": unsupported version " + std::to_string(version));
  }
  const auto count = byteio::get_le<std::uint32_t>(header + 6);

  std::vector<LabeledSample> out;
  out.reserve(count);
  std::string rec(kDatasetRecordBytes, '\0');
  std::uint64_t offset = kDatasetHeaderBytes;
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(rec.data(), static_cast<std::streamsize>(rec.size()));
    if (in.gcount() != static_cast<std::streamsize>(rec.size())) {
      throw DatasetError(path + ": truncated record at byte offset " + std::to_string(offset));
    }
    const char* p = rec.data();
    LabeledSample s;
    s.steering_deg = byteio::get_f32(p);
    s.speed_kmh = byteio::get_f32(p + 4);
    p += 8;
    s.dvs.resize(kImagePixels);
    s.aps.resize(kImagePixels);
    for (auto& v : s.dvs) v = byteio::get_f32(p), p += 4;
    for (auto& v : s.aps) v = byteio::get_f32(p), p += 4;
    out.push_back(std::move(s));
    offset += rec.size();
  }

  std::ifstream index(index_path(path));
  if (index) {
    std::string line;
    std::getline(index, line);  // header
    for (auto& s : out) {
      if (!std::getline(index, line)) throw DatasetError(index_path(path) + ": too few rows");
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) throw DatasetError(index_path(path) + ": malformed row");
      s.recording_id = line.substr(0, comma);
      s.window_end_ms = parse_u64(line.substr(comma + 1), "window_end_ms");
    }
  }
  return out;
}

}  // namespace dvsdrive

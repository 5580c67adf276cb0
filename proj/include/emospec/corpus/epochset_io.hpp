#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "emospec/corpus/epoch.hpp"
#include "emospec/error.hpp"
#include "emospec/io.hpp"

namespace emospec::corpus {

// EpochSet format v1: a directory holding
//   manifest.json  - geometry, labels and per-record metadata
//   data.f32le     - little-endian float32, epoch-major, channel-major, sample-minor
inline constexpr int kEpochSetFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kDataFile = "data.f32le";

inline nlohmann::json manifest_json(const EpochSet& set) {
  const auto& g = set.manifest.geometry;
  nlohmann::json j;
  j["format_version"] = kEpochSetFormatVersion;
  j["dataset_name"] = set.manifest.dataset_name;
  j["geometry"] = g.name;
  j["n_epochs"] = set.records.size();
  j["n_channels"] = g.channels;
  j["n_samples"] = g.samples;
  j["fs_hz"] = g.fs;
  j["scheme"] = std::string(to_string(set.manifest.scheme));
  j["seed"] = set.manifest.seed ? nlohmann::json(*set.manifest.seed) : nlohmann::json(nullptr);
  if (set.manifest.snr_db) j["snr_db"] = *set.manifest.snr_db;
  auto& recs = j["records"] = nlohmann::json::array();
  const std::uint64_t epoch_bytes = g.channels * g.samples * sizeof(float);
  for (std::size_t e = 0; e < set.records.size(); ++e) {
    const auto& r = set.records[e];
    nlohmann::json rj;
    rj["subject"] = r.subject_id;
    rj["trial"] = r.trial_id;
    if (r.ratings) {
      rj["valence"] = r.ratings->valence;
      rj["arousal"] = r.ratings->arousal;
    }
    if (r.discrete_label) rj["label"] = *r.discrete_label;
    rj["emotional"] = r.emotional;
    rj["offset_bytes"] = e * epoch_bytes;
    recs.push_back(std::move(rj));
  }
  return j;
}

inline void write_epochset(const EpochSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  const auto data_path = dir / kDataFile;
  auto tmp = data_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    std::string buf;
    for (const auto& r : set.records) {
      buf.clear();
      io::put_f32_le(buf, r.samples);
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, data_path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
  io::write_atomic(dir / kManifestFile, manifest_json(set).dump(2) + "\n");
}

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace detail

inline EpochSet read_epochset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  const auto data_path = dir / kDataFile;
  if (!std::filesystem::exists(manifest_path)) throw DataError("epoch set: no manifest at " + manifest_path.string());
  if (!std::filesystem::exists(data_path)) throw DataError("epoch set: no data file at " + data_path.string());

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_all(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("epoch set manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const std::string where = "manifest " + manifest_path.string();
  if (!j.is_object() || !j.contains("format_version")) throw DataError(where + ": not an EpochSet manifest (no format_version)");
  const int version = detail::required<int>(j, "format_version", where);
  if (version != kEpochSetFormatVersion)
    throw DataError(where + ": unsupported format_version " + std::to_string(version) + " (expected " +
                    std::to_string(kEpochSetFormatVersion) + ")");

  EpochSet set;
  auto& m = set.manifest;
  m.dataset_name = detail::required<std::string>(j, "dataset_name", where);
  m.geometry.name = j.value("geometry", std::string("custom"));
  const auto n_epochs = detail::required<std::uint64_t>(j, "n_epochs", where);
  m.geometry.channels = detail::required<std::uint64_t>(j, "n_channels", where);
  m.geometry.samples = detail::required<std::uint64_t>(j, "n_samples", where);
  m.geometry.fs = detail::required<double>(j, "fs_hz", where);
  try {
    m.scheme = scheme_kind_from_string(detail::required<std::string>(j, "scheme", where));
  } catch (const InvalidArgument& e) {
    throw DataError(where + ": " + e.what());
  }
  if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("snr_db")) m.snr_db = j["snr_db"].get<double>();
  try {
    m.geometry.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(where + ": " + e.what());
  }

  const auto& recs = j.contains("records") ? j["records"] : nlohmann::json();
  if (!recs.is_array() || recs.size() != n_epochs)
    throw DataError(where + ": records array length " + std::to_string(recs.is_array() ? recs.size() : 0) +
                    " != n_epochs " + std::to_string(n_epochs));

  const std::uint64_t epoch_values = m.geometry.channels * m.geometry.samples;
  const std::uint64_t expected = n_epochs * epoch_values * sizeof(float);
  const std::uint64_t actual = std::filesystem::file_size(data_path);
  if (actual != expected)
    throw DataError("epoch set data size mismatch: expected " + std::to_string(expected) + " bytes (" +
                    std::to_string(n_epochs) + " epochs x " + std::to_string(m.geometry.channels) + " channels x " +
                    std::to_string(m.geometry.samples) + " samples x 4), found " + std::to_string(actual) + " bytes");

  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + data_path.string());
  set.records.reserve(n_epochs);
  for (std::uint64_t e = 0; e < n_epochs; ++e) {
    const auto& rj = recs[e];
    const std::string rwhere = where + " record " + std::to_string(e);
    EpochRecord r;
    r.subject_id = detail::required<int>(rj, "subject", rwhere);
    r.trial_id = detail::required<int>(rj, "trial", rwhere);
    r.emotional = detail::required<bool>(rj, "emotional", rwhere);
    const bool has_v = rj.contains("valence") && !rj["valence"].is_null();
    const bool has_a = rj.contains("arousal") && !rj["arousal"].is_null();
    if (has_v || has_a) {
      Ratings rt;
      rt.valence = has_v ? rj["valence"].get<double>() : 5.0;
      rt.arousal = has_a ? rj["arousal"].get<double>() : 5.0;
      r.ratings = rt;
    }
    if (rj.contains("label") && !rj["label"].is_null()) r.discrete_label = rj["label"].get<int>();
    const auto offset = detail::required<std::uint64_t>(rj, "offset_bytes", rwhere);
    if (offset != e * epoch_values * sizeof(float))
      throw DataError(rwhere + ": offset_bytes " + std::to_string(offset) + " != expected " +
                      std::to_string(e * epoch_values * sizeof(float)));
    r.channel_count = m.geometry.channels;
    r.samples_per_channel = m.geometry.samples;
    r.fs = m.geometry.fs;
    r.samples.resize(epoch_values);
    in.read(reinterpret_cast<char*>(r.samples.data()), static_cast<std::streamsize>(epoch_values * sizeof(float)));
    if (!in) throw DataError("epoch set data: short read at epoch " + std::to_string(e));
    if constexpr (std::endian::native == std::endian::big)
      for (float& v : r.samples) v = io::byteswap_if_big(v);
    try {
      r.validate();
    } catch (const DataError& err) {
      throw DataError(rwhere + ": " + err.what());
    }
    set.records.push_back(std::move(r));
  }
  return set;
}

}  // namespace emospec::corpus

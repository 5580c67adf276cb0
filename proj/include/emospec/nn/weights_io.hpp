#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "emospec/error.hpp"
#include "emospec/io.hpp"
#include "emospec/nn/network.hpp"

namespace emospec::nn {

inline nlohmann::json layer_to_json(const LayerSpec& spec) {
  using nlohmann::json;
  json j = std::visit(overloaded{[](const Conv2D& l) {
                                   return json{{"filters", l.filters},
                                               {"kernel_h", l.kernel_h},
                                               {"kernel_w", l.kernel_w},
                                               {"stride", l.stride}};
                                 },
                                 [](const MaxPool2D& l) { return json{{"pool", l.pool}, {"stride", l.stride}}; },
                                 [](const Dropout& l) { return json{{"rate", l.rate}}; },
                                 [](const RepeatVector& l) { return json{{"n", l.n}}; },
                                 [](const LSTM& l) {
                                   return json{{"units", l.units}, {"return_sequences", l.return_sequences}};
                                 },
                                 [](const Dense& l) { return json{{"units", l.units}}; },
                                 [](const auto&) { return json::object(); }},
                      spec);
  j["type"] = std::string(layer_name(spec));
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "Conv2D")
    return Conv2D{j.at("filters").get<std::size_t>(), j.value("kernel_h", std::size_t{3}),
                  j.value("kernel_w", std::size_t{3}), j.value("stride", std::size_t{1})};
  if (type == "ReLU") return ReLU{};
  if (type == "MaxPool2D") return MaxPool2D{j.value("pool", std::size_t{2}), j.value("stride", std::size_t{2})};
  if (type == "Dropout") return Dropout{j.at("rate").get<double>()};
  if (type == "Flatten") return Flatten{};
  if (type == "RepeatVector") return RepeatVector{j.value("n", std::size_t{4})};
  if (type == "LSTM") return LSTM{j.at("units").get<std::size_t>(), j.value("return_sequences", false)};
  if (type == "Dense") return Dense{j.at("units").get<std::size_t>()};
  if (type == "Softmax") return Softmax{};
  throw InvalidArgument("unknown layer type '" + type + "'");
}

inline nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  return {{"input", spec.input}, {"layers", layers}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.input = j.at("input").get<Shape>();
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  return s;
}

inline constexpr char kWeightsMagic[4] = {'S', 'M', 'W', '1'};

// Layout: "SMW1", u32 spec length, spec JSON, u64 architecture fingerprint,
// u32 tensor count, then per tensor u32 rank, u64 dims and little-endian
// 32-bit floats.
inline std::string encode_weights(const Network<float>& net) {
  std::string buf(kWeightsMagic, 4);
  const auto spec = spec_to_json(net.spec()).dump();
  io::put_le(buf, static_cast<std::uint32_t>(spec.size()));
  buf += spec;
  io::put_le(buf, net.spec().fingerprint());
  std::uint32_t count = 0;
  for (const auto& layer : net.params()) count += static_cast<std::uint32_t>(layer.size());
  io::put_le(buf, count);
  for (const auto& layer : net.params())
    for (const auto& t : layer) {
      io::put_le(buf, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape) io::put_le(buf, static_cast<std::uint64_t>(d));
      io::put_f32_le(buf, t.values);
    }
  return buf;
}

inline void save_weights(const Network<float>& net, const std::filesystem::path& path) {
  io::write_atomic(path, encode_weights(net));
}

inline Network<float> decode_weights(std::string_view bytes, const std::optional<NetworkSpec>& expected = std::nullopt) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kWeightsMagic, 4))
    throw DataError("not a weight file (bad magic)");
  io::Reader r(bytes.substr(4), "weight file");
  const auto spec_len = r.get<std::uint32_t>();
  const auto spec_text = r.take(spec_len);
  const auto stored_fp = r.get<std::uint64_t>();
  NetworkSpec spec;
  try {
    spec = spec_from_json(nlohmann::json::parse(spec_text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("weight file: malformed architecture header: ") + e.what());
  }
  if (spec.fingerprint() != stored_fp) throw DataError("weight file: architecture fingerprint does not match header");
  if (expected && expected->fingerprint() != stored_fp)
    throw DataError("weight file: architecture fingerprint mismatch (file " + std::to_string(stored_fp) +
                    ", expected " + std::to_string(expected->fingerprint()) + ")");
  Network<float> net(spec, 0);
  auto& params = net.mutable_params();
  std::uint32_t count = 0;
  for (const auto& layer : params) count += static_cast<std::uint32_t>(layer.size());
  if (r.get<std::uint32_t>() != count) throw DataError("weight file: tensor count does not match architecture");
  for (auto& layer : params)
    for (auto& t : layer) {
      const auto rank = r.get<std::uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (shape != t.shape)
        throw DataError("weight file: tensor shape " + shape_string(shape) + " where " + shape_string(t.shape) +
                        " was expected");
      r.get_f32(t.values);
    }
  if (r.remaining() != 0) throw DataError("weight file: trailing bytes");
  return net;
}

inline Network<float> load_weights(const std::filesystem::path& path,
                                   const std::optional<NetworkSpec>& expected = std::nullopt) {
  return decode_weights(io::read_all(path), expected);
}

}  // namespace emospec::nn

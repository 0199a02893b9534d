#include "istlm/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "istlm/error.hpp"
#include "istlm/util.hpp"

namespace istlm {
namespace {

constexpr std::string_view kMagic = "ISTLM1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::ordered_json ConfigJson(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["v_text"] = c.v_text;
  j["v_speech"] = c.v_speech;
  j["max_pos_text"] = c.max_pos_text;
  j["max_pos_speech"] = c.max_pos_speech;
  j["seed"] = c.seed;
  return j;
}

ModelConfig ConfigFrom(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.v_text = j.at("v_text").get<int>();
  c.v_speech = j.at("v_speech").get<int>();
  c.max_pos_text = j.at("max_pos_text").get<int>();
  c.max_pos_speech = j.at("max_pos_speech").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string ModelConfigToJson(const ModelConfig& config) { return ConfigJson(config).dump(); }

ModelConfig ModelConfigFromJson(const std::string& json) {
  try {
    return ConfigFrom(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config parse error: ") + e.what());
  }
}

std::string SerializeCheckpoint(const Parameters<float>& params) {
  nlohmann::ordered_json header;
  header["config"] = ConfigJson(params.config);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  std::string payload;
  params.ForEach([&](const std::string& name, const Matrix<float>& m) {
    tensors[name] = {{"shape", {m.rows(), m.cols()}}, {"dtype", "f32"}, {"offset", payload.size()}};
    payload.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  });
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();
  const std::uint64_t length = text.size();
  std::string out(kMagic);
  out.append(reinterpret_cast<const char*>(&length), sizeof(length));
  out += text;
  out += payload;
  return out;
}

Parameters<float> DeserializeCheckpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw DataError("not an ISTLM1 checkpoint");
  }
  std::uint64_t length = 0;
  std::memcpy(&length, bytes.data() + kMagic.size(), sizeof(length));
  const std::size_t header_start = kMagic.size() + sizeof(length);
  if (length > bytes.size() - header_start) throw DataError("checkpoint header truncated");
  const std::size_t payload_start = header_start + length;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_start, length));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header parse error: ") + e.what());
  }
  Parameters<float> params = Parameters<float>::Zeros(ConfigFrom(header.at("config")));
  const auto& tensors = header.at("tensors");
  params.ForEach([&](const std::string& name, Matrix<float>& m) {
    if (!tensors.contains(name)) throw DataError("checkpoint lacks tensor '" + name + "'");
    const auto& entry = tensors.at(name);
    const auto shape = entry.at("shape").get<std::vector<long>>();
    if (entry.at("dtype").get<std::string>() != "f32") throw DataError("tensor '" + name + "' is not f32");
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw DataError("tensor '" + name + "' has an unexpected shape");
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t size = static_cast<std::size_t>(m.size()) * sizeof(float);
    if (payload_start + offset + size > bytes.size()) throw DataError("tensor '" + name + "' payload truncated");
    std::memcpy(m.data(), bytes.data() + payload_start + offset, size);
  });
  return params;
}

void SaveCheckpoint(const Parameters<float>& params, const std::string& path) {
  WriteFile(path, SerializeCheckpoint(params));
}

Parameters<float> LoadCheckpoint(const std::string& path) { return DeserializeCheckpoint(ReadFile(path)); }

}  // namespace istlm

#pragma once

#include <string>

#include "istlm/tinylm.hpp"

namespace istlm {

// Container layout: the 6-byte magic "ISTLM1", a little-endian uint64 header
// length, the JSON header {"config": {...}, "tensors": {name: {"shape", "dtype",
// "offset"}}}, then the little-endian f32 payload. Offsets are relative to the
// payload start.
std::string SerializeCheckpoint(const Parameters<float>& params);
Parameters<float> DeserializeCheckpoint(const std::string& bytes);

void SaveCheckpoint(const Parameters<float>& params, const std::string& path);
Parameters<float> LoadCheckpoint(const std::string& path);

std::string ModelConfigToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const std::string& json);

}  // namespace istlm

#pragma once

#include <filesystem>

#include "json.hpp"

#include "dejavu/ad/tape.h"

namespace dejavu::ad {

inline constexpr int kCheckpointFormatVersion = 1;

// {"format":"dejavu-params","version":1,"tensors":{name:{"shape":[..],"data":[..]}}}
// Doubles are written in shortest round-trip form, so load(save(p)) == p.
nlohmann::json params_to_json(const ParamStore& store);
ParamStore params_from_json(const nlohmann::json& doc);

void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

}  // namespace dejavu::ad

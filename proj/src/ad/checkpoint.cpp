#include "dejavu/ad/checkpoint.h"

#include <fstream>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::ad {

using nlohmann::json;

json params_to_json(const ParamStore& store) {
  json tensors = json::object();
  for (const auto& [name, e] : store.entries()) {
    tensors[name] = {{"shape", e.value.shape()}, {"data", e.value.values()}};
  }
  return {{"format", "dejavu-params"}, {"version", kCheckpointFormatVersion}, {"tensors", tensors}};
}

ParamStore params_from_json(const json& doc) {
  if (doc.value("format", "") != "dejavu-params") {
    throw ValidationError("parameter file: missing or wrong 'format' tag");
  }
  const int version = doc.value("version", -1);
  if (version != kCheckpointFormatVersion) {
    throw ValidationError(fmt::format("parameter file: unsupported version {}", version));
  }
  ParamStore store;
  for (const auto& [name, t] : doc.at("tensors").items()) {
    Shape shape = t.at("shape").get<Shape>();
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != shape_size(shape)) {
      throw ValidationError(fmt::format("parameter '{}': data length {} vs shape {}", name,
                                        data.size(), shape_string(shape)));
    }
    store.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << params_to_json(store).dump() << '\n';
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open parameter file {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return params_from_json(doc);
}

}  // namespace dejavu::ad

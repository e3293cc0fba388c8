#pragma once

#include <span>
#include <string>
#include <vector>

namespace dejavu::features {

struct FeatureDef {
  std::string name;
  std::string description;
};

// Fixed order; extract_ts_features returns values in this order.
const std::vector<FeatureDef>& feature_catalog();
std::size_t feature_index(const std::string& name);

// Deterministic and total on finite input; throws ValidationError on an
// empty or non-finite column.
std::vector<double> extract_ts_features(std::span<const double> column);

}  // namespace dejavu::features

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/dataset.h"
#include "dejavu/model.h"

namespace dejavu::interpret {

// Per failure class, the aggregated feature of that class's top-scoring unit.
struct ClassSignature {
  std::string failure_id;
  std::map<std::string, std::vector<double>> vectors;
};

ClassSignature class_signature(const data::FailureRecord& record, const model::Localizer& model);
ClassSignature class_signature(const data::FailureRecord& record, const model::Inference& inference);

// 0 when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
// Max over shared classes of the cosine similarity; -1 with no shared class.
double signature_similarity(const ClassSignature& a, const ClassSignature& b);

struct HistoryEntry {
  ClassSignature signature;
  std::vector<std::string> ground_truth;
  std::vector<std::string> truth_classes;
};

std::vector<HistoryEntry> build_history(std::span<const data::FailureRecord> train,
                                        const model::Localizer& model);

struct SimilarFailure {
  std::string failure_id;
  double similarity = 0.0;
  std::vector<std::string> ground_truth;
  std::vector<std::string> truth_classes;
};

// Top-k by descending similarity, ties by ascending failure id. Entries with
// the incoming failure's own id are skipped.
std::vector<SimilarFailure> find_similar(const ClassSignature& incoming,
                                         std::span<const HistoryEntry> history, std::size_t k);

// Incoming failure's top units, then each similar failure with its truth and
// both sides' normalized truth windows. `history_records` supplies windows.
nlohmann::json local_report_json(const data::FailureRecord& incoming, const model::Localizer& model,
                                 std::span<const SimilarFailure> similar,
                                 std::span<const data::FailureRecord> history_records,
                                 std::size_t top_units = 5);
std::string local_report_text(const nlohmann::json& report);

}  // namespace dejavu::interpret

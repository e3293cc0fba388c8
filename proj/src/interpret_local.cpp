#include "dejavu/interpret_local.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::interpret {

using nlohmann::json;

ClassSignature class_signature(const data::FailureRecord& record, const model::Localizer& model) {
  return class_signature(record, model.infer(record));
}

ClassSignature class_signature(const data::FailureRecord& record, const model::Inference& inf) {
  const graph::Fdg& g = *record.fdg;
  const std::size_t width = inf.aggregated.dim(1);
  std::map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    const std::string& cls = g.unit_at(i).class_id;
    auto it = best.find(cls);
    // Units are id-sorted, so ties keep the smallest id.
    if (it == best.end() || inf.scores[i] > inf.scores[it->second]) best[cls] = i;
  }
  ClassSignature sig{record.failure_id, {}};
  for (const auto& [cls, i] : best) {
    const auto& v = inf.aggregated.values();
    sig.vectors[cls].assign(v.begin() + static_cast<std::ptrdiff_t>(i * width),
                            v.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
  }
  return sig;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError(fmt::format("cosine of lengths {} and {}", a.size(), b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double signature_similarity(const ClassSignature& a, const ClassSignature& b) {
  double best = -1.0;
  for (const auto& [cls, va] : a.vectors) {
    auto it = b.vectors.find(cls);
    if (it != b.vectors.end()) best = std::max(best, cosine_similarity(va, it->second));
  }
  return best;
}

std::vector<HistoryEntry> build_history(std::span<const data::FailureRecord> train,
                                        const model::Localizer& model) {
  std::vector<HistoryEntry> out;
  out.reserve(train.size());
  for (const auto& r : train) out.push_back({class_signature(r, model), r.ground_truth, r.truth_classes()});
  return out;
}

std::vector<SimilarFailure> find_similar(const ClassSignature& incoming,
                                         std::span<const HistoryEntry> history, std::size_t k) {
  std::vector<SimilarFailure> all;
  for (const auto& h : history) {
    if (h.signature.failure_id == incoming.failure_id) continue;
    all.push_back({h.signature.failure_id, signature_similarity(incoming, h.signature), h.ground_truth,
                   h.truth_classes});
  }
  std::sort(all.begin(), all.end(), [](const SimilarFailure& a, const SimilarFailure& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.failure_id < b.failure_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

namespace {

json windows_json(const data::FailureRecord& rec, std::span<const std::string> units) {
  json out = json::array();
  for (const auto& u : units) {
    const auto& w = rec.window(u);
    json rows = json::array();
    for (std::size_t r = 0; r < w.length(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < w.metric_count(); ++c) row.push_back(w.matrix.at(r, c));
      rows.push_back(std::move(row));
    }
    out.push_back({{"unit_id", u},
                   {"class_id", rec.fdg->unit_at(rec.fdg->require_index(u)).class_id},
                   {"values", rows}});
  }
  return out;
}

}  // namespace

json local_report_json(const data::FailureRecord& incoming, const model::Localizer& model,
                       std::span<const SimilarFailure> similar,
                       std::span<const data::FailureRecord> history_records, std::size_t top_units) {
  const Ranking ranking = model::localize(incoming, model);
  json top = json::array();
  for (std::size_t i = 0; i < std::min(top_units, ranking.entries.size()); ++i) {
    top.push_back({{"rank", i + 1}, {"unit_id", ranking.entries[i].unit_id}, {"score", ranking.entries[i].score}});
  }
  // Incoming truth when known, else the top-ranked unit.
  std::vector<std::string> focus = incoming.ground_truth;
  if (focus.empty() && !ranking.entries.empty()) focus.push_back(ranking.entries.front().unit_id);

  json sims = json::array();
  for (const auto& s : similar) {
    auto rec = std::find_if(history_records.begin(), history_records.end(),
                            [&](const data::FailureRecord& r) { return r.failure_id == s.failure_id; });
    json entry = {{"failure_id", s.failure_id},
                  {"similarity", s.similarity},
                  {"ground_truth", s.ground_truth},
                  {"truth_classes", s.truth_classes}};
    if (rec != history_records.end()) entry["windows"] = windows_json(*rec, s.ground_truth);
    sims.push_back(std::move(entry));
  }
  return {{"failure_id", incoming.failure_id},
          {"top_units", top},
          {"incoming_windows", windows_json(incoming, focus)},
          {"similar", sims}};
}

std::string local_report_text(const json& report) {
  std::string out = fmt::format("Failure {}\n  top units:\n", report.at("failure_id").get<std::string>());
  for (const auto& u : report.at("top_units")) {
    out += fmt::format("    {:>2}. {:<28} {:.4f}\n", u.at("rank").get<std::size_t>(),
                       u.at("unit_id").get<std::string>(), u.at("score").get<double>());
  }
  out += "  similar historical failures:\n";
  for (const auto& s : report.at("similar")) {
    std::string truths;
    for (const auto& t : s.at("ground_truth")) truths += (truths.empty() ? "" : ", ") + t.get<std::string>();
    out += fmt::format("    {:<10} similarity {:+.4f}  ground truth: {}\n",
                       s.at("failure_id").get<std::string>(), s.at("similarity").get<double>(), truths);
  }
  return out;
}

}  // namespace dejavu::interpret

#pragma once

// nlohmann::json conversions for every library type that crosses a file or
// HTTP boundary. Doubles round-trip exactly (shortest representation).

#include "json.hpp"

#include "reweighter/cocluster.hpp"
#include "reweighter/dataset.hpp"
#include "reweighter/error.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/layout.hpp"
#include "reweighter/model.hpp"
#include "reweighter/quality.hpp"
#include "reweighter/session.hpp"

namespace rw {

using nlohmann::json;

void to_json(json& j, const Matrix& m);
void from_json(const json& j, Matrix& m);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const ModelState& m);
void from_json(const json& j, ModelState& m);
void to_json(json& j, const ValidationRow& r);
void from_json(const json& j, ValidationRow& r);
void to_json(json& j, const BipartiteGraph& g);
void from_json(const json& j, BipartiteGraph& g);
void to_json(json& j, const QualitySets& q);
void from_json(const json& j, QualitySets& q);
void to_json(json& j, const WeightBounds& b);
void from_json(const json& j, WeightBounds& b);
void to_json(json& j, const MultiTaskState& s);
void from_json(const json& j, MultiTaskState& s);
void to_json(json& j, const SolverConfig& c);
void from_json(const json& j, SolverConfig& c);
void to_json(json& j, const ColumnNode& n);
void from_json(const json& j, ColumnNode& n);
void to_json(json& j, const CoClustering& cc);
void from_json(const json& j, CoClustering& cc);
void to_json(json& j, const Link& l);
void from_json(const json& j, Link& l);
void to_json(json& j, const Glyph& g);
void from_json(const json& j, Glyph& g);
void to_json(json& j, const SamplePosition& p);
void from_json(const json& j, SamplePosition& p);
void to_json(json& j, const LayoutConfig& c);
void from_json(const json& j, LayoutConfig& c);
void to_json(json& j, const ClusterLayout& l);
void from_json(const json& j, ClusterLayout& l);
void to_json(json& j, const DiffEntry& e);
void from_json(const json& j, DiffEntry& e);
void to_json(json& j, const DiffResult& d);
void from_json(const json& j, DiffResult& d);
void to_json(json& j, const Contribution& c);
void to_json(json& j, const Contributors& c);
void to_json(json& j, const Adjustment& a);
void from_json(const json& j, Adjustment& a);
void to_json(json& j, const LogEntry& e);
void from_json(const json& j, LogEntry& e);
void to_json(json& j, const Snapshot& s);
void from_json(const json& j, Snapshot& s);
void to_json(json& j, const FineTuneMetrics& m);
void from_json(const json& j, FineTuneMetrics& m);
void to_json(json& j, const SessionConfig& c);
void from_json(const json& j, SessionConfig& c);
void to_json(json& j, const SessionState& s);
void from_json(const json& j, SessionState& s);

json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j);

/// Parses `text`, mapping parse and type errors to rw::Error(malformed).
template <typename T>
T parse_as(const json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(errc::kMalformed, std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace rw

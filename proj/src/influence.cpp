#include "reweighter/influence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "reweighter/error.hpp"
#include "reweighter/rng.hpp"

namespace rw {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFoldSeedSalt = 0xC0F1DE7CEULL;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

void BipartiteGraph::validate() const {
  if (g.rows() != m() || g.cols() != n())
    throw Error(errc::kDimensionMismatch, "influence matrix shape does not match the id lists");
  if (val_weights.size() != m())
    throw Error(errc::kDimensionMismatch, "val_weights length does not match m");
  if (!confidences.empty() && confidences.size() != n())
    throw Error(errc::kDimensionMismatch, "confidences length does not match n");
  for (double v : g.data())
    if (!std::isfinite(v)) throw Error(errc::kNumerical, "non-finite influence value");
  for (double w : val_weights)
    if (!std::isfinite(w) || w < 0.0) throw Error(errc::kInvalidArgument, "validation weights must be >= 0");
}

Matrix training_gradients(const ModelState& model, const Dataset& ds,
                          const std::map<SampleId, int>& label_overrides) {
  Matrix grads(0, model.num_params());
  for (SampleId id : ds.train_ids()) {
    const Sample& s = ds.at(id);
    auto it = label_overrides.find(id);
    const int label = it == label_overrides.end() ? s.observed_label : it->second;
    grads.append_row(per_sample_gradient(model, s.features, label));
  }
  return grads;
}

std::vector<double> influence_row(const ModelState& model, const Sample& sample, int label,
                                  const Matrix& train_gradients) {
  const std::vector<double> gv = per_sample_gradient(model, sample.features, label);
  std::vector<double> row(train_gradients.rows());
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = dot(gv, train_gradients.row(j));
  return row;
}

BipartiteGraph build_graph(const ModelState& model, const Dataset& ds,
                           std::span<const ValidationRow> rows,
                           std::optional<std::span<const double>> init_val_weights,
                           const std::map<SampleId, int>& label_overrides) {
  if (rows.empty()) throw Error(errc::kInvalidArgument, "empty validation split");
  if (ds.train_ids().empty()) throw Error(errc::kInvalidArgument, "empty training split");
  if (init_val_weights && init_val_weights->size() != rows.size())
    throw Error(errc::kDimensionMismatch, "initial validation weights do not match the rows");

  BipartiteGraph graph;
  graph.train_ids = ds.train_ids();
  const Matrix grads = training_gradients(model, ds, label_overrides);
  graph.g = Matrix(0, graph.train_ids.size());
  for (const ValidationRow& r : rows) {
    if (r.label < 0 || r.label >= ds.num_classes())
      throw Error(errc::kInvalidClassIndex, "invalid class index for validation row");
    graph.val_ids.push_back(r.id);
    graph.g.append_row(influence_row(model, ds.at(r.id), r.label, grads));
  }
  if (init_val_weights)
    graph.val_weights.assign(init_val_weights->begin(), init_val_weights->end());
  else
    graph.val_weights.assign(rows.size(), 1.0);
  graph.validate();
  return graph;
}

BipartiteGraph build_graph(const ModelState& model, const Dataset& ds,
                           std::optional<std::span<const double>> init_val_weights) {
  std::vector<ValidationRow> rows;
  for (SampleId id : ds.validation_ids()) rows.push_back({id, ds.at(id).observed_label});
  BipartiteGraph graph = build_graph(model, ds, rows, init_val_weights);
  graph.confidences = compute_confidence(model, ds).values;
  return graph;
}

ModelState influence_checkpoint(const ModelState& trained) {
  ModelState start = trained;
  start.theta = Matrix(trained.theta.rows(), trained.theta.cols());
  return start;
}

BipartiteGraph build_influence(const ModelState& trained, const Dataset& ds, int folds) {
  std::vector<ValidationRow> rows;
  for (SampleId id : ds.validation_ids()) rows.push_back({id, ds.at(id).observed_label});
  BipartiteGraph graph = build_graph(influence_checkpoint(trained), ds, rows, std::nullopt);
  graph.confidences = compute_confidence(trained, ds, folds).values;
  return graph;
}

ConfidenceResult compute_confidence(const ModelState& model, const TrainingSet& data, int folds) {
  if (folds < 2) throw Error(errc::kInvalidArgument, "K must be >= 2");
  const std::size_t n = data.size();
  ConfidenceResult result;
  result.values.assign(n, 0.0);
  if (n == 0) return result;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(model.config.seed ^ kFoldSeedSalt);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> fold_of(n);
  for (std::size_t t = 0; t < n; ++t) fold_of[order[t]] = static_cast<int>(t % static_cast<std::size_t>(folds));

  const std::set<int> all_classes(data.labels.begin(), data.labels.end());
  for (int f = 0; f < folds; ++f) {
    std::vector<double> w(n, 0.0);
    std::set<int> present;
    bool any_held_out = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (fold_of[j] == f) {
        any_held_out = true;
      } else {
        w[j] = 1.0;
        present.insert(data.labels[j]);
      }
    }
    if (!any_held_out) continue;
    const bool fallback = present != all_classes;
    const ModelState fold_model = fallback ? model : fit(data, w, model.config);
    if (fallback) result.fallback_folds.push_back(f);
    for (std::size_t j = 0; j < n; ++j) {
      if (fold_of[j] != f) continue;
      const auto p = predict_proba(fold_model, data.features.row(j));
      result.values[j] = p[static_cast<std::size_t>(data.labels[j])];
    }
  }
  return result;
}

ConfidenceResult compute_confidence(const ModelState& model, const Dataset& ds, int folds) {
  return compute_confidence(model, make_training_set(ds), folds);
}

std::vector<double> training_weights(const Matrix& g, std::span<const double> val_weights) {
  std::vector<double> ws(g.cols(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double wv = val_weights[i];
    const auto row = g.row(i);
    for (std::size_t j = 0; j < ws.size(); ++j) ws[j] += wv * row[j];
  }
  return ws;
}

std::vector<double> training_weights(const BipartiteGraph& graph) {
  return training_weights(graph.g, graph.val_weights);
}

void export_influence(const BipartiteGraph& graph, const std::filesystem::path& csv_path,
                      const std::filesystem::path& sidecar_path) {
  graph.validate();
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(errc::kIo, "cannot write " + csv_path.string());
    out << graph.m() << ',' << graph.n() << '\n';
    for (std::size_t i = 0; i < graph.m(); ++i) {
      const auto row = graph.g.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_real(row[j]);
      out << '\n';
    }
    if (!out) throw Error(errc::kIo, "write failed for " + csv_path.string());
  }
  // Sidecar reals go through format_real too, so json::parse gets 17 digits.
  std::ostringstream side;
  auto write_reals = [&](const std::vector<double>& v) {
    side << '[';
    for (std::size_t i = 0; i < v.size(); ++i) side << (i ? "," : "") << format_real(v[i]);
    side << ']';
  };
  side << "{\"val_ids\": " << json(graph.val_ids).dump() << ", \"train_ids\": " << json(graph.train_ids).dump()
       << ", \"val_weights\": ";
  write_reals(graph.val_weights);
  side << ", \"confidences\": ";
  write_reals(graph.confidences);
  side << "}\n";
  std::ofstream out(sidecar_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIo, "cannot write " + sidecar_path.string());
  out << side.str();
}

BipartiteGraph import_influence(const std::filesystem::path& csv_path,
                                const std::filesystem::path& sidecar_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open " + csv_path.string());
  std::string line;
  std::size_t m = 0, n = 0;
  {
    if (!std::getline(in, line)) throw Error(errc::kMalformed, "influence CSV is empty");
    char comma = 0;
    std::istringstream header(line);
    if (!(header >> m >> comma >> n) || comma != ',')
      throw Error(errc::kMalformed, "influence CSV header must be \"m,n\"");
  }
  BipartiteGraph graph;
  graph.g = Matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::getline(in, line)) throw Error(errc::kMalformed, "influence CSV has fewer than m rows");
    std::size_t pos = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      const std::string cell = line.substr(pos, end - pos);
      char* stop = nullptr;
      const double v = std::strtod(cell.c_str(), &stop);
      if (cell.empty() || stop != cell.c_str() + cell.size())
        throw Error(errc::kMalformed, "bad influence value in row " + std::to_string(i));
      graph.g(i, j) = v;
      pos = end + 1;
      if (j + 1 < n && end == line.size())
        throw Error(errc::kMalformed, "influence CSV row " + std::to_string(i) + " is short");
    }
    if (n > 0 && pos <= line.size()) throw Error(errc::kMalformed, "influence CSV row " + std::to_string(i) + " is long");
  }

  std::ifstream side(sidecar_path, std::ios::binary);
  if (!side) throw Error(errc::kIo, "cannot open " + sidecar_path.string());
  try {
    const json j = json::parse(side);
    graph.val_ids = j.at("val_ids").get<std::vector<SampleId>>();
    graph.train_ids = j.at("train_ids").get<std::vector<SampleId>>();
    graph.val_weights = j.at("val_weights").get<std::vector<double>>();
    graph.confidences = j.value("confidences", std::vector<double>{});
  } catch (const json::exception& e) {
    throw Error(errc::kMalformed, std::string("malformed influence sidecar: ") + e.what());
  }
  graph.validate();
  return graph;
}

}  // namespace rw

#include "reweighter/session.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "reweighter/error.hpp"
#include "reweighter/serialize.hpp"

namespace rw {

namespace {

std::size_t validation_index(const SessionState& s, SampleId id) {
  for (std::size_t i = 0; i < s.val_rows.size(); ++i)
    if (s.val_rows[i].id == id) return i;
  throw Error(errc::kUnknownSample, "sample " + std::to_string(id) + " is not a validation row");
}

bool is_training(const Dataset& ds, SampleId id) {
  const auto& t = ds.train_ids();
  return std::find(t.begin(), t.end(), id) != t.end();
}

// Partition to warm-start from: the previous one, with rows added since
// then placed in group 0. Empty when the shapes cannot be reconciled.
std::optional<CoClustering> warm_partition(const SessionState& s) {
  const CoClustering& prev = s.clustering;
  if (prev.row_group.empty() || prev.col_group.size() != s.graph.n() || prev.row_group.size() > s.graph.m())
    return std::nullopt;
  CoClustering warm = prev;
  warm.row_group.resize(s.graph.m(), 0);
  return warm;
}

void refresh_clusters(const Dataset& ds, const SessionConfig& config, SessionState& s, bool warm) {
  const DiscreteMatrix dm = discretize(s.graph.g, config.epsilon, config.normalization);
  FacaOptions options;
  const std::optional<CoClustering> start = warm ? warm_partition(s) : std::nullopt;
  if (start) options.warm_start = &*start;
  s.clustering = refine_hierarchy(dm, faca(dm, options), config.max_leaf);
  s.layout = build_layout(ds, s.graph, s.clustering, s.quality, config.layout);
}

void rebuild_graph(const Dataset& ds, const SessionConfig& config, SessionState& s) {
  const std::vector<double> weights = s.graph.val_weights;
  const ModelState checkpoint = influence_checkpoint(s.model);
  s.graph = build_graph(checkpoint, ds, s.val_rows, std::span<const double>(weights), s.corrected_labels);
  const TrainingSet data = make_training_set(ds, s.corrected_labels);
  s.graph.confidences = compute_confidence(s.model, data, config.confidence_folds).values;
  s.quality.refresh_from_confidence(s.graph.train_ids, s.graph.confidences, config.tau_hi, config.tau_lo);
  s.graph_model = checkpoint;
  s.graph_labels = s.corrected_labels;
  s.graph_revision = s.model_revision;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

std::string to_string(AdjustmentKind kind) {
  switch (kind) {
    case AdjustmentKind::RelabelValidation: return "RELABEL_VALIDATION";
    case AdjustmentKind::AddValidation: return "ADD_VALIDATION";
    case AdjustmentKind::DragWeight: return "DRAG_WEIGHT";
    case AdjustmentKind::VerifyQuality: return "VERIFY_QUALITY";
  }
  return "VERIFY_QUALITY";
}

AdjustmentKind adjustment_kind_from_string(const std::string& s) {
  if (s == "RELABEL_VALIDATION") return AdjustmentKind::RelabelValidation;
  if (s == "ADD_VALIDATION") return AdjustmentKind::AddValidation;
  if (s == "DRAG_WEIGHT") return AdjustmentKind::DragWeight;
  if (s == "VERIFY_QUALITY") return AdjustmentKind::VerifyQuality;
  throw Error(errc::kInvalidArgument, "unknown adjustment kind '" + s + "'");
}

std::vector<int> training_labels(const Dataset& ds, const SessionState& state) {
  return make_training_set(ds, state.corrected_labels).labels;
}

SessionState initial_state(const Dataset& ds, const SessionConfig& config) {
  SessionState s;
  s.model = train_model(ds, std::nullopt, config.train);
  for (SampleId id : ds.validation_ids()) s.val_rows.push_back({id, ds.at(id).observed_label});
  s.graph.val_weights.assign(s.val_rows.size(), 1.0);
  rebuild_graph(ds, config, s);
  s.bounds = WeightBounds(s.graph.m());
  refresh_clusters(ds, config, s, false);
  return s;
}

SessionState apply_adjustment(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                              Adjustment adj) {
  SessionState s = state;
  if (adj.sequence != 0 && adj.sequence != s.next_sequence)
    throw Error(errc::kInvalidArgument, "adjustment sequence " + std::to_string(adj.sequence) + " is out of order");
  switch (adj.kind) {
    case AdjustmentKind::RelabelValidation: {
      const std::size_t i = validation_index(s, adj.target);
      if (adj.new_label < 0 || adj.new_label >= ds.num_classes())
        throw Error(errc::kInvalidClassIndex, "invalid class index " + std::to_string(adj.new_label));
      s.val_rows[i].label = adj.new_label;
      s.corrected_labels[adj.target] = adj.new_label;
      const Matrix grads = training_gradients(s.graph_model, ds, s.graph_labels);
      const auto row = influence_row(s.graph_model, ds.at(adj.target), adj.new_label, grads);
      std::copy(row.begin(), row.end(), s.graph.g.row(i).begin());
      break;
    }
    case AdjustmentKind::AddValidation: {
      if (!ds.contains(adj.target) || !is_training(ds, adj.target))
        throw Error(errc::kUnknownSample, "sample " + std::to_string(adj.target) + " is not a training sample");
      for (const ValidationRow& r : s.val_rows)
        if (r.id == adj.target)
          throw Error(errc::kDuplicateValidation, "sample " + std::to_string(adj.target) + " is already a validation row");
      const auto it = s.corrected_labels.find(adj.target);
      const int label = it == s.corrected_labels.end() ? ds.at(adj.target).observed_label : it->second;
      const Matrix grads = training_gradients(s.graph_model, ds, s.graph_labels);
      const auto row = influence_row(s.graph_model, ds.at(adj.target), label, grads);
      double mean = 1.0;
      if (!s.graph.val_weights.empty()) {
        mean = 0.0;
        for (double w : s.graph.val_weights) mean += w;
        mean /= static_cast<double>(s.graph.val_weights.size());
      }
      s.val_rows.push_back({adj.target, label});
      s.graph.val_ids.push_back(adj.target);
      s.graph.g.append_row(row);
      s.graph.val_weights.push_back(mean);
      s.bounds.resize(s.graph.m());
      break;
    }
    case AdjustmentKind::DragWeight: {
      const std::size_t i = validation_index(s, adj.target);
      const double w = s.graph.val_weights[i];
      if (adj.direction == DragDirection::Up) {
        s.bounds.lower[i] = (1.0 + config.gamma) * w;
        if (s.bounds.upper[i] && *s.bounds.upper[i] < *s.bounds.lower[i]) s.bounds.upper[i].reset();
      } else {
        s.bounds.upper[i] = (1.0 - config.gamma) * w;
        s.bounds.lower[i].reset();
      }
      break;
    }
    case AdjustmentKind::VerifyQuality: {
      if (!ds.contains(adj.target) || !is_training(ds, adj.target))
        throw Error(errc::kUnknownSample, "sample " + std::to_string(adj.target) + " is not a training sample");
      s.quality.verify(adj.target, adj.verdict);
      break;
    }
  }
  adj.sequence = s.next_sequence++;
  LogEntry entry;
  entry.kind = LogKind::Adjustment;
  entry.sequence = adj.sequence;
  entry.adjustment = adj;
  entry.epoch = s.epoch;
  s.log.push_back(std::move(entry));
  return s;
}

SessionState recompute(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                       RecomputeSummary* summary) {
  SessionState s = state;
  if (s.graph_revision != s.model_revision) rebuild_graph(ds, config, s);
  const std::vector<double> old_ws = training_weights(s.graph);

  SolverConfig solver = config.solver;
  solver.initial_sigma = s.sigma;
  const std::vector<int> labels = training_labels(ds, s);
  const OptimizeResult opt = optimize_weights(s.graph, s.quality, labels, ds.num_classes(), s.bounds, solver);

  s.snapshots.push_back({"pre-recompute", s.epoch, old_ws});
  s.graph.val_weights = opt.w_v;
  s.sigma = opt.sigma;
  refresh_clusters(ds, config, s, config.warm_start);
  s.epoch += 1;

  LogEntry entry;
  entry.kind = LogKind::Recompute;
  entry.sequence = s.next_sequence++;
  entry.epoch = s.epoch;
  s.log.push_back(std::move(entry));

  if (summary) {
    summary->epoch = s.epoch;
    summary->diff = compute_diff(s.graph.train_ids, old_ws, training_weights(s.graph));
    summary->iterations = opt.iterations;
    summary->converged = opt.converged;
    summary->stationary = opt.stationary;
  }
  return s;
}

SessionState fine_tune(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                       FineTuneMetrics* metrics) {
  SessionState s = state;
  const std::vector<double> w_s = training_weights(s.graph);
  bool any = false;
  for (double w : w_s) any = any || w > 0.0;
  if (!any) throw Error(errc::kDegenerateWeights, "all training weights are <= 0; nothing to train on");
  s.model = fit(make_training_set(ds, s.corrected_labels), w_s, config.train);
  s.model_revision += 1;
  const Accuracy acc = evaluate(s.model, ds, ds.test_ids());
  s.last_metrics = FineTuneMetrics{acc.accuracy, acc.per_class};

  LogEntry entry;
  entry.kind = LogKind::FineTune;
  entry.sequence = s.next_sequence++;
  entry.epoch = s.epoch;
  s.log.push_back(std::move(entry));
  if (metrics) *metrics = *s.last_metrics;
  return s;
}

Session::Session(std::shared_ptr<const Dataset> dataset, SessionConfig config)
    : dataset_(std::move(dataset)), config_(std::move(config)) {
  initial_ = initial_state(*dataset_, config_);
  current_ = initial_;
}

Session::Session(std::shared_ptr<const Dataset> dataset, SessionConfig config, SessionState initial,
                 SessionState current, std::vector<SessionState> undo_stack)
    : dataset_(std::move(dataset)),
      config_(std::move(config)),
      initial_(std::move(initial)),
      current_(std::move(current)),
      undo_(std::move(undo_stack)) {}

std::uint64_t Session::apply(const Adjustment& adj) {
  SessionState next = apply_adjustment(*dataset_, config_, current_, adj);
  undo_.push_back(std::move(current_));
  current_ = std::move(next);
  return current_.log.back().sequence;
}

std::vector<std::uint64_t> Session::apply_batch(const std::vector<Adjustment>& batch) {
  SessionState cur = current_;
  std::vector<SessionState> pushed;
  std::vector<std::uint64_t> seqs;
  for (const Adjustment& adj : batch) {
    SessionState next = apply_adjustment(*dataset_, config_, cur, adj);
    pushed.push_back(std::move(cur));
    cur = std::move(next);
    seqs.push_back(cur.log.back().sequence);
  }
  for (SessionState& p : pushed) undo_.push_back(std::move(p));
  current_ = std::move(cur);
  return seqs;
}

RecomputeSummary Session::recompute() {
  RecomputeSummary summary;
  current_ = rw::recompute(*dataset_, config_, current_, &summary);
  return summary;
}

FineTuneMetrics Session::fine_tune() {
  FineTuneMetrics m;
  current_ = rw::fine_tune(*dataset_, config_, current_, &m);
  return m;
}

void Session::undo() {
  if (undo_.empty()) throw Error(errc::kNothingToUndo, "nothing to undo");
  current_ = std::move(undo_.back());
  undo_.pop_back();
}

std::string Session::statehash() const {
  json j;
  j["state"] = current_;
  j["undo_depth"] = undo_.size();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

Session replay(std::shared_ptr<const Dataset> dataset, const SessionConfig& config, const SessionState& start,
               const std::vector<LogEntry>& log) {
  Session session(std::move(dataset), config, start, start, {});
  for (const LogEntry& e : log) {
    if (e.sequence != session.state().next_sequence)
      throw Error(errc::kMalformed, "log sequence " + std::to_string(e.sequence) + " does not follow the state");
    switch (e.kind) {
      case LogKind::Adjustment: session.apply(*e.adjustment); break;
      case LogKind::Recompute: session.recompute(); break;
      case LogKind::FineTune: session.fine_tune(); break;
    }
  }
  return session;
}

std::string session_to_json_text(const Session& session) {
  json j;
  j["format"] = kSessionFormat;
  j["config"] = session.config();
  j["dataset"] = dataset_to_json(session.dataset());
  j["initial"] = session.initial();
  j["current"] = session.state();
  j["undo_stack"] = session.undo_stack();
  return j.dump();
}

Session session_from_json_text(const std::string& text, LoadMode mode) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(errc::kMalformed, std::string("corrupt session file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
    throw Error(errc::kMalformed, "session file has no format tag");
  const std::string format = j["format"].get<std::string>();
  if (format != kSessionFormat)
    throw Error(errc::kVersionMismatch, "unsupported session format '" + format + "' (expected " + kSessionFormat + ")");
  try {
    auto dataset = std::make_shared<const Dataset>(dataset_from_json(j.at("dataset")));
    const SessionConfig config = j.at("config").get<SessionConfig>();
    SessionState initial = j.at("initial").get<SessionState>();
    SessionState current = j.at("current").get<SessionState>();
    if (mode == LoadMode::Replay) return replay(dataset, config, initial, current.log);
    return Session(dataset, config, std::move(initial), std::move(current),
                   j.at("undo_stack").get<std::vector<SessionState>>());
  } catch (const json::exception& e) {
    throw Error(errc::kMalformed, std::string("corrupt session file: ") + e.what());
  }
}

void save_session(const Session& session, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIo, "cannot write " + path.string());
  out << session_to_json_text(session) << '\n';
  if (!out) throw Error(errc::kIo, "write failed for " + path.string());
}

Session load_session(const std::filesystem::path& path, LoadMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return session_from_json_text(buf.str(), mode);
}

}  // namespace rw

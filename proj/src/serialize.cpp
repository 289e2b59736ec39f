#include "reweighter/serialize.hpp"

namespace rw {

namespace {

std::string label_name(QualityLabel l) { return l == QualityLabel::High ? "high" : "low"; }

QualityLabel label_from_name(const std::string& s) {
  if (s == "high") return QualityLabel::High;
  if (s == "low") return QualityLabel::Low;
  throw Error(errc::kMalformed, "unknown quality label '" + s + "'");
}

json optional_reals(const std::vector<std::optional<double>>& v) {
  json arr = json::array();
  for (const auto& x : v) arr.push_back(x ? json(*x) : json(nullptr));
  return arr;
}

std::vector<std::optional<double>> optional_reals_from(const json& arr) {
  std::vector<std::optional<double>> v;
  for (const json& x : arr) v.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return v;
}

std::string log_kind_name(LogKind k) {
  switch (k) {
    case LogKind::Adjustment: return "ADJUSTMENT";
    case LogKind::Recompute: return "RECOMPUTE";
    case LogKind::FineTune: return "FINE_TUNE";
  }
  return "ADJUSTMENT";
}

LogKind log_kind_from(const std::string& s) {
  if (s == "ADJUSTMENT") return LogKind::Adjustment;
  if (s == "RECOMPUTE") return LogKind::Recompute;
  if (s == "FINE_TUNE") return LogKind::FineTune;
  throw Error(errc::kMalformed, "unknown log entry kind '" + s + "'");
}

}  // namespace

void to_json(json& j, const Matrix& m) { j = json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

void from_json(const json& j, Matrix& m) {
  m = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows() * m.cols()) throw Error(errc::kMalformed, "matrix data does not match its shape");
  m.data() = data;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
           {"l2", c.l2}, {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2 = j.value("l2", c.l2);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const ModelState& m) { j = json{{"theta", m.theta}, {"config", m.config}}; }

void from_json(const json& j, ModelState& m) {
  m.theta = j.at("theta").get<Matrix>();
  m.config = j.at("config").get<TrainConfig>();
}

void to_json(json& j, const ValidationRow& r) { j = json{{"id", r.id}, {"label", r.label}}; }

void from_json(const json& j, ValidationRow& r) {
  r.id = j.at("id").get<SampleId>();
  r.label = j.at("label").get<int>();
}

void to_json(json& j, const BipartiteGraph& g) {
  j = json{{"val_ids", g.val_ids}, {"train_ids", g.train_ids}, {"g", g.g}, {"val_weights", g.val_weights},
           {"confidences", g.confidences}};
}

void from_json(const json& j, BipartiteGraph& g) {
  g.val_ids = j.at("val_ids").get<std::vector<SampleId>>();
  g.train_ids = j.at("train_ids").get<std::vector<SampleId>>();
  g.g = j.at("g").get<Matrix>();
  g.val_weights = j.at("val_weights").get<std::vector<double>>();
  g.confidences = j.at("confidences").get<std::vector<double>>();
}

void to_json(json& j, const QualitySets& q) {
  j = json::array();
  for (const auto& [id, e] : q.entries) {
    j.push_back(json{{"id", id},
                     {"label", label_name(e.label)},
                     {"provenance", e.provenance == Provenance::UserVerified ? "user" : "confidence"}});
  }
}

void from_json(const json& j, QualitySets& q) {
  q.entries.clear();
  for (const json& e : j) {
    const std::string prov = e.at("provenance").get<std::string>();
    if (prov != "user" && prov != "confidence") throw Error(errc::kMalformed, "unknown provenance '" + prov + "'");
    q.entries[e.at("id").get<SampleId>()] = QualitySets::Entry{
        label_from_name(e.at("label").get<std::string>()),
        prov == "user" ? Provenance::UserVerified : Provenance::Confidence};
  }
}

void to_json(json& j, const WeightBounds& b) { j = json{{"lower", optional_reals(b.lower)}, {"upper", optional_reals(b.upper)}}; }

void from_json(const json& j, WeightBounds& b) {
  b.lower = optional_reals_from(j.at("lower"));
  b.upper = optional_reals_from(j.at("upper"));
  b.validate();
}

void to_json(json& j, const MultiTaskState& s) { j = json{{"sigma_c", s.sigma_c}, {"sigma_b", s.sigma_b}}; }

void from_json(const json& j, MultiTaskState& s) {
  s.sigma_c = j.at("sigma_c").get<double>();
  s.sigma_b = j.at("sigma_b").get<double>();
}

void to_json(json& j, const SolverConfig& c) {
  j = json{{"tol", c.tol},           {"max_iters", c.max_iters},       {"init_step", c.init_step},
           {"shrink", c.shrink},     {"max_halvings", c.max_halvings}, {"record_iterates", c.record_iterates},
           {"min_sigma", c.min_sigma},       {"max_log_sigma_step", c.max_log_sigma_step}};
  if (c.initial_sigma) j["initial_sigma"] = *c.initial_sigma;
}

void from_json(const json& j, SolverConfig& c) {
  c = SolverConfig{};
  c.tol = j.value("tol", c.tol);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.init_step = j.value("init_step", c.init_step);
  c.shrink = j.value("shrink", c.shrink);
  c.max_halvings = j.value("max_halvings", c.max_halvings);
  c.record_iterates = j.value("record_iterates", c.record_iterates);
  c.min_sigma = j.value("min_sigma", c.min_sigma);
  c.max_log_sigma_step = j.value("max_log_sigma_step", c.max_log_sigma_step);
  if (j.contains("initial_sigma")) c.initial_sigma = j.at("initial_sigma").get<MultiTaskState>();
}

void to_json(json& j, const ColumnNode& n) {
  j = json{{"columns", n.columns}, {"forced", n.forced}, {"children", n.children}};
}

void from_json(const json& j, ColumnNode& n) {
  n.columns = j.at("columns").get<std::vector<std::size_t>>();
  n.forced = j.at("forced").get<bool>();
  n.children = j.at("children").get<std::vector<ColumnNode>>();
}

void to_json(json& j, const CoClustering& cc) {
  json blocks = json::array();
  for (const BlockCounts& b : cc.block_counts) blocks.push_back({b[0], b[1], b[2]});
  j = json{{"row_group", cc.row_group}, {"col_group", cc.col_group}, {"k", cc.k},
           {"l", cc.l},                 {"block_counts", blocks},      {"total_cost", cc.total_cost}};
  j["col_children"] = cc.col_children ? json(*cc.col_children) : json(nullptr);
}

void from_json(const json& j, CoClustering& cc) {
  cc.row_group = j.at("row_group").get<std::vector<std::size_t>>();
  cc.col_group = j.at("col_group").get<std::vector<std::size_t>>();
  cc.k = j.at("k").get<std::size_t>();
  cc.l = j.at("l").get<std::size_t>();
  cc.block_counts.clear();
  for (const json& b : j.at("block_counts")) cc.block_counts.push_back(b.get<BlockCounts>());
  cc.total_cost = j.at("total_cost").get<double>();
  const json& ch = j.at("col_children");
  if (ch.is_null()) cc.col_children.reset();
  else cc.col_children = ch.get<std::vector<ColumnNode>>();
}

void to_json(json& j, const Link& l) {
  j = json{{"row_cluster", l.row_cluster}, {"col_cluster", l.col_cluster}, {"pos_mass", l.pos_mass},
           {"neg_mass", l.neg_mass},       {"context", l.context}};
}

void from_json(const json& j, Link& l) {
  l.row_cluster = j.at("row_cluster").get<std::size_t>();
  l.col_cluster = j.at("col_cluster").get<std::size_t>();
  l.pos_mass = j.at("pos_mass").get<double>();
  l.neg_mass = j.at("neg_mass").get<double>();
  l.context = j.at("context").get<bool>();
}

void to_json(json& j, const Glyph& g) {
  j = json{{"consistency", g.consistency == Consistency::Consistent ? "CONSISTENT" : "INCONSISTENT"},
           {"sign", g.sign == WeightSign::Positive ? "POSITIVE" : "NEGATIVE"}};
}

void from_json(const json& j, Glyph& g) {
  const auto c = j.at("consistency").get<std::string>();
  const auto s = j.at("sign").get<std::string>();
  if ((c != "CONSISTENT" && c != "INCONSISTENT") || (s != "POSITIVE" && s != "NEGATIVE"))
    throw Error(errc::kMalformed, "unknown glyph");
  g.consistency = c == "CONSISTENT" ? Consistency::Consistent : Consistency::Inconsistent;
  g.sign = s == "POSITIVE" ? WeightSign::Positive : WeightSign::Negative;
}

void to_json(json& j, const SamplePosition& p) { j = json{{"x", p.x}, {"y", p.y}}; }

void from_json(const json& j, SamplePosition& p) {
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
}

void to_json(json& j, const LayoutConfig& c) {
  j = json{{"context_frac", c.context_frac},
           {"collapse_threshold", c.collapse_threshold},
           {"representative_budget", c.representative_budget},
           {"seed", c.seed}};
}

void from_json(const json& j, LayoutConfig& c) {
  c = LayoutConfig{};
  c.context_frac = j.value("context_frac", c.context_frac);
  c.collapse_threshold = j.value("collapse_threshold", c.collapse_threshold);
  c.representative_budget = j.value("representative_budget", c.representative_budget);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const ClusterLayout& l) {
  json bars = json::array();
  for (const BarCounts& b : l.bar_counts) bars.push_back({b[0], b[1], b[2], b[3]});
  j = json{{"row_clusters", l.row_clusters},
           {"col_clusters", l.col_clusters},
           {"row_order", l.row_order},
           {"col_order", l.col_order},
           {"crossings", l.crossings},
           {"links", l.links},
           {"val_positions", l.val_positions},
           {"train_positions", l.train_positions},
           {"glyphs", l.glyphs},
           {"bar_counts", bars},
           {"collapsed", l.collapsed},
           {"row_representatives", l.row_representatives},
           {"col_representatives", l.col_representatives},
           {"avg_val_weight", l.avg_val_weight}};
}

void from_json(const json& j, ClusterLayout& l) {
  l.row_clusters = j.at("row_clusters").get<std::vector<std::vector<std::size_t>>>();
  l.col_clusters = j.at("col_clusters").get<std::vector<std::vector<std::size_t>>>();
  l.row_order = j.at("row_order").get<std::vector<std::size_t>>();
  l.col_order = j.at("col_order").get<std::vector<std::size_t>>();
  l.crossings = j.at("crossings").get<long>();
  l.links = j.at("links").get<std::vector<Link>>();
  l.val_positions = j.at("val_positions").get<std::vector<SamplePosition>>();
  l.train_positions = j.at("train_positions").get<std::vector<SamplePosition>>();
  l.glyphs = j.at("glyphs").get<std::vector<Glyph>>();
  l.bar_counts.clear();
  for (const json& b : j.at("bar_counts")) l.bar_counts.push_back(b.get<BarCounts>());
  l.collapsed = j.at("collapsed").get<std::vector<bool>>();
  l.row_representatives = j.at("row_representatives").get<std::vector<std::vector<SampleId>>>();
  l.col_representatives = j.at("col_representatives").get<std::vector<std::vector<SampleId>>>();
  l.avg_val_weight = j.at("avg_val_weight").get<std::vector<double>>();
}

void to_json(json& j, const DiffEntry& e) {
  j = json{{"id", e.id}, {"old", e.old_weight}, {"new", e.new_weight}, {"flagged", e.flagged}};
}

void from_json(const json& j, DiffEntry& e) {
  e.id = j.at("id").get<SampleId>();
  e.old_weight = j.at("old").get<double>();
  e.new_weight = j.at("new").get<double>();
  e.flagged = j.at("flagged").get<bool>();
}

void to_json(json& j, const DiffResult& d) { j = json{{"threshold_pct", d.threshold_pct}, {"entries", d.entries}}; }

void from_json(const json& j, DiffResult& d) {
  d.threshold_pct = j.at("threshold_pct").get<double>();
  d.entries = j.at("entries").get<std::vector<DiffEntry>>();
}

void to_json(json& j, const Contribution& c) { j = json{{"id", c.id}, {"value", c.value}}; }

void to_json(json& j, const Contributors& c) { j = json{{"positive", c.positive}, {"negative", c.negative}}; }

void to_json(json& j, const Adjustment& a) {
  j = json{{"kind", to_string(a.kind)}, {"target", a.target}, {"sequence", a.sequence}, {"timestamp", a.timestamp}};
  switch (a.kind) {
    case AdjustmentKind::RelabelValidation: j["new_label"] = a.new_label; break;
    case AdjustmentKind::AddValidation: break;
    case AdjustmentKind::DragWeight: j["direction"] = a.direction == DragDirection::Up ? "up" : "down"; break;
    case AdjustmentKind::VerifyQuality: j["verdict"] = label_name(a.verdict); break;
  }
}

void from_json(const json& j, Adjustment& a) {
  a = Adjustment{};
  a.kind = adjustment_kind_from_string(j.at("kind").get<std::string>());
  a.target = j.at("target").get<SampleId>();
  a.sequence = j.value("sequence", std::uint64_t{0});
  a.timestamp = j.value("timestamp", std::string{});
  switch (a.kind) {
    case AdjustmentKind::RelabelValidation: a.new_label = j.at("new_label").get<int>(); break;
    case AdjustmentKind::AddValidation: break;
    case AdjustmentKind::DragWeight: {
      const auto d = j.at("direction").get<std::string>();
      if (d != "up" && d != "down") throw Error(errc::kMalformed, "direction must be \"up\" or \"down\"");
      a.direction = d == "up" ? DragDirection::Up : DragDirection::Down;
      break;
    }
    case AdjustmentKind::VerifyQuality: a.verdict = label_from_name(j.at("verdict").get<std::string>()); break;
  }
}

void to_json(json& j, const LogEntry& e) {
  j = json{{"kind", log_kind_name(e.kind)}, {"sequence", e.sequence}, {"epoch", e.epoch}};
  if (e.adjustment) j["adjustment"] = *e.adjustment;
}

void from_json(const json& j, LogEntry& e) {
  e.kind = log_kind_from(j.at("kind").get<std::string>());
  e.sequence = j.at("sequence").get<std::uint64_t>();
  e.epoch = j.at("epoch").get<int>();
  if (j.contains("adjustment")) e.adjustment = j.at("adjustment").get<Adjustment>();
  else e.adjustment.reset();
  if (e.kind == LogKind::Adjustment && !e.adjustment) throw Error(errc::kMalformed, "adjustment entry without payload");
}

void to_json(json& j, const Snapshot& s) { j = json{{"name", s.name}, {"epoch", s.epoch}, {"w_s", s.w_s}}; }

void from_json(const json& j, Snapshot& s) {
  s.name = j.at("name").get<std::string>();
  s.epoch = j.at("epoch").get<int>();
  s.w_s = j.at("w_s").get<std::vector<double>>();
}

void to_json(json& j, const FineTuneMetrics& m) {
  j = json{{"test_accuracy", m.test_accuracy}, {"per_class_accuracy", m.per_class_accuracy}};
}

void from_json(const json& j, FineTuneMetrics& m) {
  m.test_accuracy = j.at("test_accuracy").get<double>();
  m.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
}

void to_json(json& j, const SessionConfig& c) {
  j = json{{"train", c.train},
           {"solver", c.solver},
           {"gamma", c.gamma},
           {"epsilon", c.epsilon},
           {"normalization", to_string(c.normalization)},
           {"max_leaf", c.max_leaf},
           {"tau_hi", c.tau_hi},
           {"tau_lo", c.tau_lo},
           {"confidence_folds", c.confidence_folds},
           {"warm_start", c.warm_start},
           {"layout", c.layout}};
}

void from_json(const json& j, SessionConfig& c) {
  c = SessionConfig{};
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("solver")) c.solver = j.at("solver").get<SolverConfig>();
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("normalization")) c.normalization = normalization_from_string(j.at("normalization").get<std::string>());
  c.max_leaf = j.value("max_leaf", c.max_leaf);
  c.tau_hi = j.value("tau_hi", c.tau_hi);
  c.tau_lo = j.value("tau_lo", c.tau_lo);
  c.confidence_folds = j.value("confidence_folds", c.confidence_folds);
  c.warm_start = j.value("warm_start", c.warm_start);
  if (j.contains("layout")) c.layout = j.at("layout").get<LayoutConfig>();
}

void to_json(json& j, const SessionState& s) {
  auto labels_json = [](const std::map<SampleId, int>& m) {
    json arr = json::array();
    for (const auto& [id, label] : m) arr.push_back({{"id", id}, {"label", label}});
    return arr;
  };
  j = json{{"model", s.model},
           {"model_revision", s.model_revision},
           {"graph_model", s.graph_model},
           {"graph_revision", s.graph_revision},
           {"graph_labels", labels_json(s.graph_labels)},
           {"val_rows", s.val_rows},
           {"graph", s.graph},
           {"corrected_labels", labels_json(s.corrected_labels)},
           {"quality", s.quality},
           {"bounds", s.bounds},
           {"sigma", s.sigma},
           {"clustering", s.clustering},
           {"layout", s.layout},
           {"snapshots", s.snapshots},
           {"log", s.log},
           {"next_sequence", s.next_sequence},
           {"epoch", s.epoch}};
  j["last_metrics"] = s.last_metrics ? json(*s.last_metrics) : json(nullptr);
}

void from_json(const json& j, SessionState& s) {
  s.model = j.at("model").get<ModelState>();
  s.model_revision = j.at("model_revision").get<int>();
  s.graph_model = j.at("graph_model").get<ModelState>();
  s.graph_revision = j.at("graph_revision").get<int>();
  s.val_rows = j.at("val_rows").get<std::vector<ValidationRow>>();
  s.graph = j.at("graph").get<BipartiteGraph>();
  auto labels_from = [](const json& arr) {
    std::map<SampleId, int> m;
    for (const json& e : arr) m[e.at("id").get<SampleId>()] = e.at("label").get<int>();
    return m;
  };
  s.graph_labels = labels_from(j.at("graph_labels"));
  s.corrected_labels = labels_from(j.at("corrected_labels"));
  s.quality = j.at("quality").get<QualitySets>();
  s.bounds = j.at("bounds").get<WeightBounds>();
  s.sigma = j.at("sigma").get<MultiTaskState>();
  s.clustering = j.at("clustering").get<CoClustering>();
  s.layout = j.at("layout").get<ClusterLayout>();
  s.snapshots = j.at("snapshots").get<std::vector<Snapshot>>();
  s.log = j.at("log").get<std::vector<LogEntry>>();
  s.next_sequence = j.at("next_sequence").get<std::uint64_t>();
  s.epoch = j.at("epoch").get<int>();
  const json& m = j.at("last_metrics");
  if (m.is_null()) s.last_metrics.reset();
  else s.last_metrics = m.get<FineTuneMetrics>();
  s.graph.validate();
}

json dataset_to_json(const Dataset& ds) { return json::parse(dataset_to_json_text(ds)); }

Dataset dataset_from_json(const json& j) { return dataset_from_json_text(j.dump()); }

}  // namespace rw

#include "reweighter/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "reweighter/error.hpp"
#include "reweighter/rng.hpp"

namespace rw {

namespace {

using nlohmann::json;

std::size_t floor_count(double ratio, std::size_t n) {
  // Guard against 0.29 * 100 == 28.999999999999996.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

// The class whose mean is nearest the mean of `own`. Means on a circle give
// two equidistant neighbours; near-ties within 1e-9 go to the lower index.
int most_confusable_class(int own, const std::vector<std::vector<double>>& means) {
  const auto& mu = means[static_cast<std::size_t>(own)];
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(means.size()); ++c) {
    if (c == own) continue;
    const double d = squared_distance(mu, means[static_cast<std::size_t>(c)]);
    if (d < best_d * (1.0 - 1e-9)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

void inject_noise(std::vector<Sample>& samples, std::vector<std::size_t> positions, double ratio,
                  const std::vector<std::vector<double>>& means, Rng& rng) {
  const std::size_t count = floor_count(ratio, positions.size());
  rng.shuffle(std::span<std::size_t>(positions));
  for (std::size_t k = 0; k < count; ++k) {
    Sample& s = samples[positions[k]];
    s.observed_label = most_confusable_class(*s.true_label, means);
  }
}

void validate_config(const DatasetGenConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(errc::kInvalidArgument, msg); };
  if (c.num_classes < 2) fail("num_classes must be >= 2");
  if (c.feature_dim < 1) fail("feature_dim must be >= 1");
  if (c.per_class < 1) fail("per_class must be >= 1");
  if (c.val_per_class < 1) fail("val_per_class must be >= 1");
  if (!(c.noise_ratio >= 0.0 && c.noise_ratio < 1.0)) fail("noise_ratio must be in [0, 1)");
  if (!(c.val_noise_ratio >= 0.0 && c.val_noise_ratio < 1.0))
    fail("val_noise_ratio must be in [0, 1)");
  if (!(c.imbalance_factor >= 1.0) || !std::isfinite(c.imbalance_factor))
    fail("imbalance_factor must be >= 1");
  if (!(c.class_separation > 0.0) || !std::isfinite(c.class_separation))
    fail("class_separation must be > 0");
}

std::vector<SampleId> ids_from_json(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const json& arr = j.at(key);
  if (!arr.is_array()) throw Error(errc::kMalformed, std::string("splits.") + key + " must be an array");
  std::vector<SampleId> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw Error(errc::kMalformed, "split ids must be integers");
    out.push_back(v.get<SampleId>());
  }
  return out;
}

int label_from_json(const json& v) {
  if (!v.is_number_integer()) throw Error(errc::kMalformed, "labels must be integers");
  return v.get<int>();
}

void write_id_array(std::ostringstream& out, const std::vector<SampleId>& ids) {
  out << '[';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ',';
    out << ids[i];
  }
  out << ']';
}

}  // namespace

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Dataset::Dataset(int num_classes, std::size_t feature_dim, std::vector<Sample> samples,
                 Splits splits)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      samples_(std::move(samples)),
      splits_(std::move(splits)) {
  if (num_classes_ < 2) throw Error(errc::kInvalidArgument, "num_classes must be >= 2");
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (!index_.emplace(s.id, i).second)
      throw Error(errc::kMalformed, "duplicate sample id " + std::to_string(s.id));
    if (s.id < 0) throw Error(errc::kMalformed, "sample ids must be non-negative");
    if (s.features.size() != feature_dim_)
      throw Error(errc::kDimensionMismatch,
                  "dimension mismatch: sample " + std::to_string(s.id) + " has " +
                      std::to_string(s.features.size()) + " features, expected " +
                      std::to_string(feature_dim_));
    auto bad_label = [&](int label) { return label < 0 || label >= num_classes_; };
    if (bad_label(s.observed_label) || (s.true_label && bad_label(*s.true_label)))
      throw Error(errc::kInvalidClassIndex,
                  "invalid class index for sample " + std::to_string(s.id));
  }
  std::unordered_set<SampleId> seen;
  for (const auto* split : {&splits_.train, &splits_.validation, &splits_.test}) {
    for (SampleId id : *split) {
      if (!index_.contains(id))
        throw Error(errc::kUnknownSample, "split references unknown sample id " + std::to_string(id));
      if (!seen.insert(id).second)
        throw Error(errc::kOverlappingSplits,
                    "overlapping splits: sample id " + std::to_string(id) + " appears twice");
    }
  }
  if (seen.size() != samples_.size())
    throw Error(errc::kMalformed, "splits must cover every sample exactly once");
}

const Sample& Dataset::at(SampleId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(errc::kUnknownSample, "unknown sample id " + std::to_string(id));
  return samples_[it->second];
}

std::vector<std::size_t> imbalanced_counts(const DatasetGenConfig& config) {
  validate_config(config);
  const int C = config.num_classes;
  std::vector<std::size_t> counts(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const double exponent = -static_cast<double>(c) / static_cast<double>(C - 1);
    const double raw = static_cast<double>(config.per_class) * std::pow(config.imbalance_factor, exponent);
    const double rounded = std::round(raw);
    if (rounded < 1.0)
      throw Error(errc::kInvalidArgument,
                  "imbalance factor leaves class " + std::to_string(c) + " with no samples");
    counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>(rounded);
  }
  return counts;
}

std::vector<std::vector<double>> class_means(int num_classes, std::size_t feature_dim,
                                             double class_separation) {
  std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes),
                                         std::vector<double>(feature_dim, 0.0));
  if (feature_dim == 1) {
    const double centre = 0.5 * static_cast<double>(num_classes - 1);
    for (int c = 0; c < num_classes; ++c)
      means[static_cast<std::size_t>(c)][0] = (static_cast<double>(c) - centre) * class_separation;
    return means;
  }
  const double step = 2.0 * std::numbers::pi / static_cast<double>(num_classes);
  const double radius = class_separation / (2.0 * std::sin(std::numbers::pi / num_classes));
  for (int c = 0; c < num_classes; ++c) {
    means[static_cast<std::size_t>(c)][0] = radius * std::cos(step * c);
    means[static_cast<std::size_t>(c)][1] = radius * std::sin(step * c);
  }
  return means;
}

Dataset generate(const DatasetGenConfig& config) {
  const std::vector<std::size_t> train_counts = imbalanced_counts(config);
  const auto means = class_means(config.num_classes, config.feature_dim, config.class_separation);
  Rng rng(config.seed);

  std::vector<Sample> samples;
  Splits splits;
  std::vector<std::size_t> train_pos, val_pos;

  auto emit = [&](int label, std::vector<SampleId>& split, std::vector<std::size_t>* positions) {
    Sample s;
    s.id = static_cast<SampleId>(samples.size());
    s.features.resize(config.feature_dim);
    const auto& mu = means[static_cast<std::size_t>(label)];
    for (std::size_t k = 0; k < config.feature_dim; ++k) s.features[k] = mu[k] + rng.normal();
    s.observed_label = label;
    s.true_label = label;
    split.push_back(s.id);
    if (positions) positions->push_back(samples.size());
    samples.push_back(std::move(s));
  };

  for (int c = 0; c < config.num_classes; ++c)
    for (std::size_t i = 0; i < train_counts[static_cast<std::size_t>(c)]; ++i)
      emit(c, splits.train, &train_pos);
  for (int c = 0; c < config.num_classes; ++c)
    for (std::size_t i = 0; i < config.val_per_class; ++i) emit(c, splits.validation, &val_pos);
  for (int c = 0; c < config.num_classes; ++c)
    for (std::size_t i = 0; i < config.test_per_class; ++i) emit(c, splits.test, nullptr);

  inject_noise(samples, std::move(train_pos), config.noise_ratio, means, rng);
  inject_noise(samples, std::move(val_pos), config.val_noise_ratio, means, rng);

  for (Sample& s : samples)
    s.payload = "class" + std::to_string(*s.true_label) + "/sample" + std::to_string(s.id);

  return Dataset(config.num_classes, config.feature_dim, std::move(samples), std::move(splits));
}

std::string dataset_to_json_text(const Dataset& ds) {
  std::ostringstream out;
  out << "{\n  \"num_classes\": " << ds.num_classes() << ",\n  \"feature_dim\": " << ds.feature_dim()
      << ",\n  \"samples\": [";
  const auto& samples = ds.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    out << (i ? ",\n    " : "\n    ") << "{\"id\": " << s.id << ", \"features\": [";
    for (std::size_t k = 0; k < s.features.size(); ++k) out << (k ? "," : "") << format_real(s.features[k]);
    out << "], \"observed_label\": " << s.observed_label;
    if (s.true_label) out << ", \"true_label\": " << *s.true_label;
    if (!s.payload.empty()) out << ", \"payload\": " << json(s.payload).dump();
    out << '}';
  }
  out << (samples.empty() ? "],\n" : "\n  ],\n");
  out << "  \"splits\": {\"train\": ";
  write_id_array(out, ds.train_ids());
  out << ", \"validation\": ";
  write_id_array(out, ds.validation_ids());
  out << ", \"test\": ";
  write_id_array(out, ds.test_ids());
  out << "}\n}\n";
  return out.str();
}

Dataset dataset_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(errc::kMalformed, std::string("malformed dataset file: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error(errc::kMalformed, "dataset must be a JSON object");
    const int num_classes = j.at("num_classes").get<int>();
    const auto feature_dim = j.at("feature_dim").get<std::size_t>();
    std::vector<Sample> samples;
    for (const auto& js : j.at("samples")) {
      Sample s;
      s.id = js.at("id").get<SampleId>();
      for (const auto& v : js.at("features")) {
        if (!v.is_number()) throw Error(errc::kMalformed, "features must be numbers");
        s.features.push_back(v.get<double>());
      }
      s.observed_label = label_from_json(js.at("observed_label"));
      if (js.contains("true_label") && !js.at("true_label").is_null())
        s.true_label = label_from_json(js.at("true_label"));
      if (js.contains("payload")) s.payload = js.at("payload").get<std::string>();
      samples.push_back(std::move(s));
    }
    Splits splits;
    const json& js = j.at("splits");
    splits.train = ids_from_json(js, "train");
    splits.validation = ids_from_json(js, "validation");
    splits.test = ids_from_json(js, "test");
    return Dataset(num_classes, feature_dim, std::move(samples), std::move(splits));
  } catch (const json::exception& e) {
    throw Error(errc::kMalformed, std::string("malformed dataset file: ") + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_json_text(buf.str());
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::kIo, "cannot write dataset file " + path.string());
  out << dataset_to_json_text(ds);
  if (!out) throw Error(errc::kIo, "write failed for " + path.string());
}

}  // namespace rw

// SPDX-License-Identifier: Apache-2.0
#include "xids/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "xids/errors.hpp"

namespace xids {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed keys are read through the size_t overload");

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Reads keys of one JSON object, remembering which were used so leftovers
/// can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where("") + " must be an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, int& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  template <typename Enum, typename Parse>
  void read_enum(const std::string& key, Enum& out, Parse parse) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = rethrow(key, [&] { return parse(s); });
  }
  std::vector<std::string> read_strings(const std::string& key) {
    std::vector<std::string> out;
    if (auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + " must be a list of strings");
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError(where(key) + " must be a list of strings");
        out.push_back(e.get<std::string>());
      }
    }
    return out;
  }

  /// Throws on any key that was never looked up.
  void finish() const {
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where(key) + "'");
    }
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  template <typename F>
  auto rethrow(const std::string& key, F&& f) {
    try {
      return f();
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

ordered_json encoder_json(const EncoderConfig& c) {
  ordered_json j;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["max_seq_len"] = c.max_seq_len;
  j["dropout"] = c.dropout_rate;
  j["relative_window"] = c.relative_window;
  return j;
}

void read_encoder_shape(Section& s, EncoderConfig& c) {
  s.read("layers", c.layers);
  s.read("heads", c.heads);
  s.read("d_model", c.d_model);
  s.read("d_ff", c.d_ff);
  s.read("max_seq_len", c.max_seq_len);
  s.read("dropout", c.dropout_rate);
  s.read("relative_window", c.relative_window);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void read_schema(Section& s, const std::string& key, std::string& name, std::vector<std::string>& columns) {
  const json* node = s.find(key);
  if (!node) return;
  if (node->is_string()) {
    name = node->get<std::string>();
    return;
  }
  if (!node->is_array()) throw ConfigError(key + " must be a schema name or a list of column names");
  for (const auto& e : *node) {
    if (!e.is_string()) throw ConfigError(key + " list must hold column names");
    columns.push_back(e.get<std::string>());
  }
}

}  // namespace

FeatureSchema RunConfig::schema() const {
  return schema_columns.empty() ? schema_by_name(schema_name) : FeatureSchema(schema_columns);
}

FeatureSchema RunConfig::dedup_schema() const {
  if (!dedup_schema_columns.empty()) return FeatureSchema(dedup_schema_columns);
  if (!dedup_schema_name.empty()) return schema_by_name(dedup_schema_name);
  return schema();
}

void RunConfig::validate() const {
  const FeatureSchema model = schema();
  const FeatureSchema identity = dedup_schema();
  for (const auto& name : model.names()) {
    if (!identity.find(name)) throw ConfigError("schema column '" + name + "' is missing from dedup_schema");
  }
  if (variants.empty()) throw ConfigError("variants must name at least one attention variant");
  if (format.significant_digits < 1 || format.significant_digits > 17) {
    throw ConfigError("format.significant_digits must be in 1..17");
  }
  const double sum = split.train + split.validation + split.test;
  if (split.train <= 0 || split.validation <= 0 || split.test <= 0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  EncoderConfig probe = encoder;
  probe.vocab_size = static_cast<int>(tokens::kNumSpecials + tokens::kNumValueTokens + model.size());
  probe.validate();
  train.validate();
  attribution.validate();
  if (report.top_k == 0) throw ConfigError("report.top_k must be >= 1");
  if (report.formats.empty()) throw ConfigError("report.formats must not be empty");
}

std::uint64_t RunConfig::split_seed() const { return seed; }
std::uint64_t RunConfig::init_seed(AttentionVariant v) const {
  return mix(seed ^ (0x1000 + static_cast<std::uint64_t>(v)));
}
std::uint64_t RunConfig::train_seed(AttentionVariant v) const {
  return mix(seed ^ (0x2000 + static_cast<std::uint64_t>(v)));
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(doc, "");

  std::string path;
  top.read("input_csv", path);
  if (!path.empty()) cfg.input_csv = resolve(base_dir, path);
  path.clear();
  top.read("work_dir", path);
  cfg.work_dir = resolve(base_dir, path.empty() ? cfg.work_dir.string() : path);
  top.read("seed", cfg.seed);
  read_schema(top, "schema", cfg.schema_name, cfg.schema_columns);
  read_schema(top, "dedup_schema", cfg.dedup_schema_name, cfg.dedup_schema_columns);
  top.read("label_column", cfg.csv.label_column);
  std::string unknown;
  top.read("unknown_labels", unknown);
  if (unknown == "drop") {
    cfg.csv.unknown_labels = UnknownLabelPolicy::Drop;
  } else if (!unknown.empty() && unknown != "error") {
    throw ConfigError("unknown_labels must be \"error\" or \"drop\"");
  }
  if (top.find("variants")) {
    cfg.variants.clear();
    for (const auto& v : top.read_strings("variants")) cfg.variants.push_back(attention_variant_from_string(v));
  }

  if (auto* node = top.find("format")) {
    Section s(*node, "format");
    s.read("significant_digits", cfg.format.significant_digits);
    s.read("integer_passthrough", cfg.format.integer_passthrough);
    s.finish();
  }
  if (auto* node = top.find("split")) {
    Section s(*node, "split");
    s.read("train", cfg.split.train);
    s.read("validation", cfg.split.validation);
    s.read("test", cfg.split.test);
    s.finish();
  }
  if (auto* node = top.find("encoder")) {
    Section s(*node, "encoder");
    read_encoder_shape(s, cfg.encoder);
    s.finish();
  }
  if (auto* node = top.find("train")) {
    Section s(*node, "train");
    auto& t = cfg.train;
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("learning_rate", t.learning_rate);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("epsilon", t.epsilon);
    s.read("weight_decay", t.weight_decay);
    s.read("patience", t.patience);
    s.read("clip_lo", t.clip_lo);
    s.read("clip_hi", t.clip_hi);
    s.finish();
  }
  if (auto* node = top.find("attribution")) {
    Section s(*node, "attribution");
    s.read("steps", cfg.attribution.steps);
    s.read_enum("baseline", cfg.attribution.baseline, baseline_kind_from_string);
    s.read("completeness_tolerance", cfg.attribution.completeness_tolerance);
    s.read_enum("target", cfg.attribution_target, attribution_target_from_string);
    s.finish();
  }
  if (auto* node = top.find("report")) {
    Section s(*node, "report");
    s.read("top_k", cfg.report.top_k);
    if (s.find("formats")) {
      cfg.report.formats.clear();
      for (const auto& f : s.read_strings("formats")) cfg.report.formats.push_back(heatmap_format_from_string(f));
    }
    s.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["input_csv"] = c.input_csv.string();
  j["work_dir"] = c.work_dir.string();
  j["seed"] = c.seed;
  if (c.schema_columns.empty()) {
    j["schema"] = c.schema_name;
  } else {
    j["schema"] = c.schema_columns;
  }
  if (!c.dedup_schema_columns.empty()) {
    j["dedup_schema"] = c.dedup_schema_columns;
  } else if (!c.dedup_schema_name.empty()) {
    j["dedup_schema"] = c.dedup_schema_name;
  }
  j["label_column"] = c.csv.label_column;
  j["unknown_labels"] = c.csv.unknown_labels == UnknownLabelPolicy::Drop ? "drop" : "error";
  j["variants"] = ordered_json::array();
  for (auto v : c.variants) j["variants"].push_back(std::string(to_string(v)));
  j["format"] = {{"significant_digits", c.format.significant_digits},
                 {"integer_passthrough", c.format.integer_passthrough}};
  j["split"] = {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}};
  j["encoder"] = encoder_json(c.encoder);
  const auto& t = c.train;
  ordered_json tj;
  tj["epochs"] = t.epochs;
  tj["batch_size"] = t.batch_size;
  tj["learning_rate"] = t.learning_rate;
  tj["beta1"] = t.beta1;
  tj["beta2"] = t.beta2;
  tj["epsilon"] = t.epsilon;
  tj["weight_decay"] = t.weight_decay;
  tj["patience"] = t.patience;
  tj["clip_lo"] = t.clip_lo;
  tj["clip_hi"] = t.clip_hi;
  j["train"] = tj;
  ordered_json aj;
  aj["steps"] = c.attribution.steps;
  aj["baseline"] = std::string(to_string(c.attribution.baseline));
  aj["completeness_tolerance"] = c.attribution.completeness_tolerance;
  aj["target"] = std::string(to_string(c.attribution_target));
  j["attribution"] = aj;
  ordered_json rj;
  rj["top_k"] = c.report.top_k;
  rj["formats"] = ordered_json::array();
  for (auto f : c.report.formats) rj["formats"].push_back(std::string(to_string(f)));
  j["report"] = rj;
  return j.dump(2) + "\n";
}

std::string encoder_config_to_json(const EncoderConfig& c) {
  ordered_json j = encoder_json(c);
  j["n_classes"] = c.n_classes;
  j["vocab_size"] = c.vocab_size;
  j["attention_variant"] = std::string(to_string(c.attention_variant));
  j["final_norm"] = c.final_norm;
  j["seed"] = c.seed;
  return j.dump();
}

EncoderConfig encoder_config_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("embedded encoder config is not valid JSON: ") + e.what());
  }
  EncoderConfig c;
  try {
    Section s(doc, "encoder");
    read_encoder_shape(s, c);
    s.read("n_classes", c.n_classes);
    s.read("vocab_size", c.vocab_size);
    s.read_enum("attention_variant", c.attention_variant, attention_variant_from_string);
    s.read("final_norm", c.final_norm);
    s.read("seed", c.seed);
    s.finish();
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("embedded encoder config: ") + e.what());
  }
  return c;
}

}  // namespace xids

// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "xids/attribution.hpp"
#include "xids/checkpoint.hpp"
#include "xids/config.hpp"
#include "xids/errors.hpp"
#include "xids/evaluation.hpp"
#include "xids/pipeline.hpp"
#include "xids/synthetic.hpp"
#include "xids/textualize.hpp"
#include "xids/tokenizer.hpp"
#include "xids/training.hpp"

namespace py = pybind11;
using namespace xids;

namespace {

FeatureSchema schema_from(const py::object& schema) {
  if (py::isinstance<py::str>(schema)) return schema_by_name(schema.cast<std::string>());
  return FeatureSchema(schema.cast<std::vector<std::string>>());
}

FlowRecord record_from(const std::vector<double>& features, const FeatureSchema& schema) {
  if (features.size() != schema.size()) {
    throw DataError("expected " + std::to_string(schema.size()) + " feature values, got " +
                    std::to_string(features.size()));
  }
  FlowRecord r;
  r.features = features;
  return r;
}

py::dict class_metrics_dict(const MetricsReport& m) {
  py::dict per_class;
  for (auto c : kAllClasses) {
    const auto& k = m.per_class[index_of(c)];
    py::dict d;
    d["precision"] = k.precision;
    d["recall"] = k.recall;
    d["f1"] = k.f1;
    d["support"] = k.support;
    per_class[py::str(std::string(to_string(c)))] = d;
  }
  py::dict out;
  out["accuracy"] = m.accuracy;
  out["macro_f1"] = m.macro_f1;
  out["weighted_f1"] = m.weighted_f1;
  out["per_class"] = per_class;
  return out;
}

py::dict attribution_dict(const AttributionResult& r, const FeatureSchema& schema) {
  py::dict features;
  for (std::size_t i = 0; i < schema.size(); ++i) features[py::str(schema.names()[i])] = r.feature_attr[i];
  py::dict out;
  out["target"] = std::string(to_string(r.target_class));
  out["features"] = features;
  out["tokens"] = r.token_attr;
  out["structural_residue"] = r.structural_residue;
  out["input_logit"] = r.input_logit;
  out["baseline_logit"] = r.baseline_logit;
  out["completeness_gap"] = r.completeness_gap;
  out["relative_gap"] = r.relative_gap();
  return out;
}

/// A trained checkpoint bound to the modelling schema it was trained on.
class Model {
 public:
  Model(const std::filesystem::path& checkpoint, const py::object& schema)
      : params_(load_checkpoint(checkpoint)), schema_(schema_from(schema)), vocab_(Vocab::build(schema_)) {
    if (static_cast<std::size_t>(params_.config.vocab_size) != vocab_.size()) {
      throw ConfigError("checkpoint vocabulary has " + std::to_string(params_.config.vocab_size) +
                        " tokens but the schema implies " + std::to_string(vocab_.size()));
    }
  }

  TokenizedExample example(const std::vector<double>& features, CoarseLabel label = CoarseLabel::Benign) const {
    return tokenize(serialize(record_from(features, schema_), schema_, {}), vocab_,
                    static_cast<std::size_t>(params_.config.max_seq_len), label);
  }

  std::vector<double> logits(const std::vector<double>& features) const {
    const Logits l = predict_logits(params_, example(features));
    return {l(0), l(1), l(2)};
  }

  std::string predict(const std::vector<double>& features) const {
    return std::string(to_string(argmax_label(predict_logits(params_, example(features)))));
  }

  py::dict explain(const std::vector<double>& features, const std::optional<std::string>& target, int steps,
                   const std::string& baseline) const {
    const auto ex = example(features);
    const CoarseLabel cls = target ? coarse_label_from_string(*target) : argmax_label(predict_logits(params_, ex));
    IGConfig ig;
    ig.steps = steps;
    ig.baseline = baseline_kind_from_string(baseline);
    ig.validate();
    AttributionResult r;
    {
      py::gil_scoped_release release;
      r = integrated_gradients(params_, ex, cls, ig);
    }
    return attribution_dict(r, schema_);
  }

  std::string fingerprint() const { return params_.fingerprint(); }
  std::string config_json() const { return encoder_config_to_json(params_.config); }
  std::vector<std::string> schema() const { return schema_.names(); }

 private:
  EncoderParams params_;
  FeatureSchema schema_;
  Vocab vocab_;
};

/// Pipeline stages over one resolved run config. Console output is
/// collected and echoed through Python's print unless quiet.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  static Pipeline from_file(const std::filesystem::path& path) { return Pipeline(load_run_config(path)); }
  static Pipeline from_json(const std::string& text, const std::filesystem::path& base_dir) {
    return Pipeline(parse_run_config(text, base_dir));
  }

  py::dict prepare(bool quiet) {
    PrepareSummary s;
    run(quiet, [&](std::ostream& out) { s = cmd_prepare(cfg_, out); });
    py::dict d;
    d["rows_read"] = s.parse.rows_read;
    d["rows_kept"] = s.parse.rows_kept;
    d["dedup_before"] = s.dedup.before;
    d["dedup_after"] = s.dedup.after;
    d["class_counts"] = std::vector<std::size_t>(s.class_counts.begin(), s.class_counts.end());
    d["overlap"] = py::make_tuple(s.overlap.train_validation, s.overlap.train_test, s.overlap.validation_test);
    return d;
  }

  py::dict train(const std::string& variant, bool quiet) {
    TrainSummary s;
    run(quiet, [&](std::ostream& out) { s = cmd_train(cfg_, attention_variant_from_string(variant), out); });
    py::list epochs;
    for (const auto& e : s.log.epochs) {
      py::dict r;
      r["epoch"] = e.epoch;
      r["train_loss"] = e.train_loss;
      r["val_loss"] = e.val_loss;
      r["val_macro_f1"] = e.val_macro_f1;
      epochs.append(r);
    }
    py::dict d;
    d["epochs"] = epochs;
    d["best_epoch"] = s.log.best_epoch;
    d["validation"] = class_metrics_dict(s.validation);
    d["fingerprint"] = s.fingerprint;
    return d;
  }

  py::dict evaluate(const std::string& variant, bool quiet) {
    MetricsReport m;
    run(quiet, [&](std::ostream& out) { m = cmd_evaluate(cfg_, attention_variant_from_string(variant), out); });
    return class_metrics_dict(m);
  }

  py::dict explain(const std::string& variant, bool quiet) {
    ExplainSummary s;
    run(quiet, [&](std::ostream& out) { s = cmd_explain(cfg_, attention_variant_from_string(variant), out); });
    py::dict rows;
    for (auto c : kAllClasses) rows[py::str(std::string(to_string(c)))] = s.matrix.values[index_of(c)];
    py::dict d;
    d["features"] = s.matrix.features;
    d["rows"] = rows;
    d["examples"] = s.examples;
    d["exceeding"] = s.exceeding;
    d["median_relative_gap"] = s.median_relative_gap;
    return d;
  }

  std::string report(bool quiet) {
    std::string text;
    run(quiet, [&](std::ostream& out) { text = cmd_report(cfg_, out); });
    return text;
  }

  std::filesystem::path work_dir() const { return cfg_.work_dir; }
  std::vector<std::string> variants() const {
    std::vector<std::string> v;
    for (auto a : cfg_.variants) v.emplace_back(to_string(a));
    return v;
  }
  std::string config_json() const { return to_json(cfg_); }

 private:
  template <class F>
  void run(bool quiet, F&& f) {
    std::ostringstream out;
    {
      py::gil_scoped_release release;
      f(out);
    }
    if (!quiet && !out.str().empty()) py::print(out.str(), py::arg("end") = "");
  }

  RunConfig cfg_;
};

}  // namespace

PYBIND11_MODULE(_xids, m) {
  m.doc() = "Flow-record transformer classifier with integrated-gradients attribution";

  auto base = py::register_exception<Error>(m, "XidsError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<AuditError>(m, "AuditError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("CLASSES") = py::make_tuple("BENIGN", "DDOS", "WEB_ATTACK");

  m.def("schema", [](const std::string& name) { return schema_by_name(name).names(); }, py::arg("name"),
        "Feature names of a built-in schema (cicids2017-15 or cicids2017-78).");
  m.def("merge_label", [](const std::string& raw) { return std::string(to_string(merge_labels(raw))); },
        py::arg("raw_label"));

  m.def(
      "format_value",
      [](double x, int significant_digits, bool integer_passthrough) {
        return format_value(x, {significant_digits, integer_passthrough});
      },
      py::arg("x"), py::arg("significant_digits") = 6, py::arg("integer_passthrough") = true);

  m.def(
      "serialize",
      [](const std::vector<double>& features, const py::object& schema, int significant_digits) {
        const auto s = schema_from(schema);
        return serialize(record_from(features, s), s, {significant_digits, true}).text;
      },
      py::arg("features"), py::arg("schema") = "cicids2017-15", py::arg("significant_digits") = 6,
      "Textual form of one flow record.");

  m.def(
      "tokenize",
      [](const std::vector<double>& features, const py::object& schema, std::size_t max_seq_len) {
        const auto s = schema_from(schema);
        const auto t = tokenize(serialize(record_from(features, s), s, {}), Vocab::build(s), max_seq_len);
        py::list spans;
        for (const auto& sp : t.feature_spans) spans.append(py::make_tuple(sp.feature_index, sp.begin, sp.end));
        py::dict d;
        d["ids"] = t.ids;
        d["attention_mask"] = t.attention_mask;
        d["spans"] = spans;
        return d;
      },
      py::arg("features"), py::arg("schema") = "cicids2017-15", py::arg("max_seq_len") = kDefaultMaxSeqLen);

  m.def(
      "vocab",
      [](const py::object& schema) {
        const auto v = Vocab::build(schema_from(schema));
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(v.token(static_cast<TokenId>(i)));
        return out;
      },
      py::arg("schema") = "cicids2017-15", "Tokens in id order.");

  m.def(
      "class_weights",
      [](const std::array<std::size_t, 3>& counts, double clip_lo, double clip_hi) {
        const auto w = class_weights(counts, clip_lo, clip_hi);
        py::dict d;
        d["weights"] = w.weights;
        d["unclipped"] = w.unclipped;
        return d;
      },
      py::arg("counts"), py::arg("clip_lo") = 0.25, py::arg("clip_hi") = 10.0);

  m.def(
      "metrics",
      [](const std::array<std::array<std::uint64_t, 3>, 3>& confusion) {
        ConfusionMatrix cm;
        cm.counts = confusion;
        return class_metrics_dict(metrics(cm));
      },
      py::arg("confusion"), "Metrics of a 3x3 confusion matrix (rows truth, columns prediction).");

  m.def(
      "write_synthetic",
      [](const std::filesystem::path& path, std::size_t flows, std::uint64_t seed) {
        SyntheticOptions o;
        o.flows = flows;
        o.seed = seed;
        const auto fx = generate_synthetic_flows(o);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        write_flow_csv(out, fx.dataset);
        const auto names = compact_schema().names();
        py::dict planted;
        for (auto c : kAllClasses) planted[py::str(std::string(to_string(c)))] = names[fx.planted[index_of(c)]];
        return planted;
      },
      py::arg("path"), py::arg("flows") = 3000, py::arg("seed") = 7,
      "Writes the synthetic fixture CSV and returns each class's planted feature.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&, const py::object&>(), py::arg("checkpoint"),
           py::arg("schema") = py::str("cicids2017-15"))
      .def("logits", &Model::logits, py::arg("features"))
      .def("predict", &Model::predict, py::arg("features"))
      .def("explain", &Model::explain, py::arg("features"), py::arg("target") = py::none(), py::arg("steps") = 64,
           py::arg("baseline") = "all_pad")
      .def_property_readonly("fingerprint", &Model::fingerprint)
      .def_property_readonly("config_json", &Model::config_json)
      .def_property_readonly("schema", &Model::schema);

  py::class_<Pipeline>(m, "Pipeline")
      .def_static("from_file", &Pipeline::from_file, py::arg("path"))
      .def_static("from_json", &Pipeline::from_json, py::arg("text"), py::arg("base_dir") = std::filesystem::path())
      .def("prepare", &Pipeline::prepare, py::arg("quiet") = true)
      .def("train", &Pipeline::train, py::arg("variant"), py::arg("quiet") = true)
      .def("evaluate", &Pipeline::evaluate, py::arg("variant"), py::arg("quiet") = true)
      .def("explain", &Pipeline::explain, py::arg("variant"), py::arg("quiet") = true)
      .def("report", &Pipeline::report, py::arg("quiet") = true)
      .def_property_readonly("work_dir", &Pipeline::work_dir)
      .def_property_readonly("variants", &Pipeline::variants)
      .def_property_readonly("config_json", &Pipeline::config_json);
}

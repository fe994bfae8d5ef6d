// SPDX-License-Identifier: Apache-2.0
#include "xids/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "xids/csv.hpp"
#include "xids/evaluation.hpp"
#include "xids/errors.hpp"
#include "xids/textualize.hpp"

namespace xids {
namespace {

const ValueFormatPolicy kReportFormat{6, false};

struct Rgb {
  double r, g, b;
};

// Viridis anchors at t = 0, 0.25, 0.5, 0.75, 1.
constexpr Rgb kViridis[] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};

std::string color_at(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 4.0;
  const int i = std::min(3, static_cast<int>(pos));
  const double f = pos - i;
  const Rgb& a = kViridis[i];
  const Rgb& b = kViridis[i + 1];
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(a.r + f * (b.r - a.r))),
                static_cast<int>(std::lround(a.g + f * (b.g - a.g))),
                static_cast<int>(std::lround(a.b + f * (b.b - a.b))));
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string export_csv(const ClassAttributionMatrix& m) {
  std::ostringstream out;
  std::vector<std::string> row{"class"};
  row.insert(row.end(), m.features.begin(), m.features.end());
  write_csv_row(out, row);
  for (const auto c : m.classes) {
    row.assign(1, std::string(to_string(c)));
    for (const double v : m.values[index_of(c)]) row.push_back(format_value(v, kReportFormat));
    write_csv_row(out, row);
  }
  return out.str();
}

std::string export_svg(const ClassAttributionMatrix& m) {
  constexpr int kCellW = 90, kCellH = 44, kLeft = 110, kTop = 150, kBarW = 18, kBarGap = 40;
  const int cols = static_cast<int>(m.features.size());
  const int width = kLeft + cols * kCellW + kBarGap + kBarW + 80;
  const int height = kTop + 3 * kCellH + 30;
  double hi = 0.0;
  for (const auto& row : m.values) {
    for (const double v : row) hi = std::max(hi, v);
  }
  auto norm = [&](double v) { return hi > 0.0 ? v / hi : 0.0; };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"13\">Mean absolute attribution by class</text>\n";
  for (int j = 0; j < cols; ++j) {
    const int x = kLeft + j * kCellW + kCellW / 2;
    s << "<text x=\"" << x << "\" y=\"" << kTop - 8 << "\" transform=\"rotate(-45 " << x << " " << kTop - 8
      << ")\">" << xml_escape(m.features[static_cast<std::size_t>(j)]) << "</text>\n";
  }
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const int y = kTop + static_cast<int>(i) * kCellH;
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + kCellH / 2 + 4 << "\" text-anchor=\"end\">"
      << to_string(m.classes[i]) << "</text>\n";
    for (int j = 0; j < cols; ++j) {
      const double v = m.values[i][static_cast<std::size_t>(j)];
      const double t = norm(v);
      const int x = kLeft + j * kCellW;
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCellW << "\" height=\"" << kCellH
        << "\" fill=\"" << color_at(t) << "\" stroke=\"#ffffff\"/>\n";
      s << "<text x=\"" << x + kCellW / 2 << "\" y=\"" << y + kCellH / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
        << (t > 0.6 ? "#000000" : "#ffffff") << "\">" << format_value(v, {4, false}) << "</text>\n";
    }
  }
  const int bx = kLeft + cols * kCellW + kBarGap;
  const int bar_h = 3 * kCellH;
  constexpr int kStops = 20;
  for (int k = 0; k < kStops; ++k) {
    const double t = 1.0 - (k + 0.5) / kStops;
    s << "<rect x=\"" << bx << "\" y=\"" << kTop + k * bar_h / kStops << "\" width=\"" << kBarW << "\" height=\""
      << bar_h / kStops + 1 << "\" fill=\"" << color_at(t) << "\"/>\n";
  }
  s << "<text x=\"" << bx + kBarW + 4 << "\" y=\"" << kTop + 8 << "\">" << format_value(hi, {4, false})
    << "</text>\n";
  s << "<text x=\"" << bx + kBarW + 4 << "\" y=\"" << kTop + bar_h << "\">0</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::string_view to_string(BaselineKind kind) {
  return kind == BaselineKind::AllPadEmbeddings ? "all_pad" : "zero";
}

BaselineKind baseline_kind_from_string(std::string_view s) {
  if (s == "all_pad") return BaselineKind::AllPadEmbeddings;
  if (s == "zero") return BaselineKind::ZeroEmbeddings;
  throw ConfigError("unknown IG baseline '" + std::string(s) + "' (expected all_pad or zero)");
}

void IGConfig::validate() const {
  if (steps < 1) throw ConfigError("attribution.steps must be >= 1");
  if (!(completeness_tolerance > 0.0)) throw ConfigError("attribution.completeness_tolerance must be > 0");
}

Matrix baseline_embeddings(const EncoderParams& params, const TokenizedExample& example, BaselineKind kind) {
  const auto n = static_cast<Eigen::Index>(example.ids.size());
  if (kind == BaselineKind::ZeroEmbeddings) return Matrix::Zero(n, params.config.d_model);
  TokenizedExample pad = example;
  std::fill(pad.ids.begin(), pad.ids.end(), tokens::kPad);
  return embed(params, pad);
}

FeatureAttribution aggregate_to_features(std::span<const double> token_attr, std::span<const TokenSpan> spans,
                                         std::size_t num_features) {
  FeatureAttribution out;
  out.features.assign(num_features, 0.0);
  std::vector<char> owned(token_attr.size(), 0);
  std::vector<char> seen(num_features, 0);
  for (const auto& s : spans) {
    if (s.feature_index >= num_features || s.begin > s.end || s.end > token_attr.size() || seen[s.feature_index]) {
      throw DataError("attribution spans do not match the example");
    }
    seen[s.feature_index] = 1;
    double sum = 0.0;
    for (std::size_t p = s.begin; p < s.end; ++p) {
      if (owned[p]) throw DataError("attribution spans overlap at position " + std::to_string(p));
      owned[p] = 1;
      sum += token_attr[p];
    }
    out.features[s.feature_index] = sum;
  }
  for (std::size_t p = 0; p < token_attr.size(); ++p) {
    if (!owned[p]) out.structural_residue += token_attr[p];
  }
  return out;
}

double AttributionResult::relative_gap() const {
  const double denom = std::fabs(output_delta());
  return denom > 1e-12 ? std::fabs(completeness_gap) / denom : std::fabs(completeness_gap);
}

AttributionResult integrated_gradients(const EncoderParams& params, const TokenizedExample& example,
                                       CoarseLabel target_class, const IGConfig& config) {
  config.validate();
  const auto target = static_cast<Eigen::Index>(index_of(target_class));
  const Matrix input = embed(params, example);
  const Matrix baseline = baseline_embeddings(params, example, config.baseline);
  const Matrix delta = input - baseline;
  const std::span<const std::uint8_t> mask(example.attention_mask);

  Logits upstream = Logits::Zero();
  upstream(target) = 1.0;

  Matrix grad_sum = Matrix::Zero(input.rows(), input.cols());
  const double m = static_cast<double>(config.steps);
  for (int k = 1; k <= config.steps; ++k) {
    const double alpha = (static_cast<double>(k) - 0.5) / m;
    const ForwardResult fr = forward_from_embeddings(params, baseline + alpha * delta, mask);
    const Matrix g = backward(params, fr.trace, upstream, BackwardMode::InputOnly).input;
    if (!g.allFinite()) throw NumericError("non-finite gradient at integrated-gradients step " + std::to_string(k));
    grad_sum += g;
  }

  AttributionResult r;
  r.target_class = target_class;
  r.input_logit = forward_from_embeddings(params, input, mask).logits(target);
  r.baseline_logit = forward_from_embeddings(params, baseline, mask).logits(target);
  r.token_attr.resize(static_cast<std::size_t>(input.rows()));
  double total = 0.0;
  for (Eigen::Index p = 0; p < input.rows(); ++p) {
    r.token_attr[static_cast<std::size_t>(p)] = delta.row(p).dot(grad_sum.row(p)) / m;
    total += r.token_attr[static_cast<std::size_t>(p)];
  }
  const FeatureAttribution fa = aggregate_to_features(r.token_attr, example.feature_spans, example.feature_spans.size());
  r.feature_attr = fa.features;
  r.structural_residue = fa.structural_residue;
  r.completeness_gap = total - r.output_delta();
  r.exceeds_tolerance = r.relative_gap() > config.completeness_tolerance;
  return r;
}

std::size_t ClassAttributionMatrix::rank_in_row(CoarseLabel c, std::size_t schema_index) const {
  const auto it = std::find(feature_index.begin(), feature_index.end(), schema_index);
  if (it == feature_index.end()) return features.size();
  const auto col = static_cast<std::size_t>(it - feature_index.begin());
  const auto& row = values[index_of(c)];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > row[col] || (row[j] == row[col] && j < col)) ++rank;
  }
  return rank;
}

ClassAttributionMatrix build_class_matrix(std::span<const AttributionResult> results,
                                          std::span<const CoarseLabel> classes, const FeatureSchema& schema,
                                          std::size_t top_k) {
  if (results.size() != classes.size()) throw DataError("build_class_matrix: results and classes differ in length");
  const std::size_t d = schema.size();
  ClassAttributionMatrix m;
  std::vector<double> global(d, 0.0);
  std::array<std::vector<double>, kNumClasses> per_class;
  for (auto& v : per_class) v.assign(d, 0.0);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& fa = results[i].feature_attr;
    if (fa.size() != d) throw DataError("build_class_matrix: attribution length does not match the schema");
    const std::size_t c = index_of(classes[i]);
    ++m.sample_counts[c];
    for (std::size_t f = 0; f < d; ++f) {
      global[f] += std::fabs(fa[f]);
      per_class[c][f] += std::fabs(fa[f]);
    }
  }
  for (const auto c : kAllClasses) {
    if (m.sample_counts[index_of(c)] == 0) {
      throw DataError("class " + std::string(to_string(c)) + " has no examples to aggregate");
    }
  }
  for (auto& g : global) g /= static_cast<double>(results.size());

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return global[a] > global[b]; });
  order.resize(std::min(top_k, d));
  for (const auto f : order) {
    m.features.push_back(schema.name(f));
    m.feature_index.push_back(f);
    m.global_scores.push_back(global[f]);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double n = static_cast<double>(m.sample_counts[c]);
    for (const auto f : order) m.values[c].push_back(per_class[c][f] / n);
  }
  return m;
}

ClassAttributionRun class_attribution_matrix(const EncoderParams& params,
                                             std::span<const TokenizedExample> examples,
                                             const FeatureSchema& schema, const IGConfig& config, std::size_t top_k,
                                             AttributionTarget target) {
  ClassAttributionRun run;
  std::vector<CoarseLabel> rows;
  run.results.reserve(examples.size());
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    const CoarseLabel c = target == AttributionTarget::TrueLabel ? ex.label : argmax_label(predict_logits(params, ex));
    run.results.push_back(integrated_gradients(params, ex, c, config));
    rows.push_back(c);
  }
  run.matrix = build_class_matrix(run.results, rows, schema, top_k);
  return run;
}

std::string_view to_string(HeatmapFormat format) { return format == HeatmapFormat::Csv ? "csv" : "svg"; }

std::string_view to_string(AttributionTarget target) {
  return target == AttributionTarget::TrueLabel ? "true_label" : "predicted";
}

AttributionTarget attribution_target_from_string(std::string_view s) {
  if (s == "true_label") return AttributionTarget::TrueLabel;
  if (s == "predicted") return AttributionTarget::Predicted;
  throw ConfigError("unknown attribution target '" + std::string(s) + "' (expected true_label or predicted)");
}

HeatmapFormat heatmap_format_from_string(std::string_view s) {
  if (s == "csv") return HeatmapFormat::Csv;
  if (s == "svg") return HeatmapFormat::Svg;
  throw ConfigError("unknown heatmap format '" + std::string(s) + "' (expected csv or svg)");
}

std::string export_heatmap(const ClassAttributionMatrix& matrix, HeatmapFormat format) {
  return format == HeatmapFormat::Csv ? export_csv(matrix) : export_svg(matrix);
}

}  // namespace xids

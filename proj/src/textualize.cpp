// SPDX-License-Identifier: Apache-2.0
#include "xids/textualize.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>

#include "xids/errors.hpp"

namespace xids {
namespace {

// Integral values below this magnitude keep every digit; at most 11 digits
// plus a sign, so a value never needs more than 12 tokens.
constexpr double kPassthroughLimit = 1e11;

/// "1.23457e+06" -> "1.23457e6", "2.5e-07" -> "2.5e-7".
std::string tidy_exponent(std::string s) {
  const auto e = s.find('e');
  if (e == std::string::npos) return s;
  std::string mantissa = s.substr(0, e);
  std::string_view exp(s);
  exp.remove_prefix(e + 1);
  bool negative = false;
  if (!exp.empty() && (exp.front() == '+' || exp.front() == '-')) {
    negative = exp.front() == '-';
    exp.remove_prefix(1);
  }
  while (exp.size() > 1 && exp.front() == '0') exp.remove_prefix(1);
  mantissa += 'e';
  if (negative) mantissa += '-';
  mantissa.append(exp);
  return mantissa;
}

}  // namespace

std::string format_value(double x, const ValueFormatPolicy& policy) {
  if (!std::isfinite(x)) throw DataError("cannot format a non-finite value");
  if (policy.significant_digits < 1 || policy.significant_digits > 17) {
    throw ConfigError("significant_digits must lie in [1, 17]");
  }
  if (x == 0.0) return "0";
  char buf[64];
  if (policy.integer_passthrough && std::fabs(x) < kPassthroughLimit && std::trunc(x) == x) {
    auto r = std::to_chars(buf, buf + sizeof buf, static_cast<std::int64_t>(x));
    return std::string(buf, r.ptr);
  }
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, policy.significant_digits);
  std::string s(buf, r.ptr);
  if (s == "-0") return "0";
  return tidy_exponent(std::move(s));
}

TextFlow serialize(const FlowRecord& record, const FeatureSchema& schema,
                   const ValueFormatPolicy& policy) {
  if (record.features.size() != schema.size()) {
    throw DataError("record has " + std::to_string(record.features.size()) + " features, schema expects " +
                    std::to_string(schema.size()));
  }
  TextFlow flow;
  flow.spans.reserve(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) flow.text.append(kClauseSeparator);
    const std::size_t begin = flow.text.size();
    flow.text.append(schema.name(i));
    flow.text.append(kClauseVerb);
    flow.text.append(format_value(record.features[i], policy));
    flow.spans.push_back({i, begin, flow.text.size()});
  }
  return flow;
}

std::string_view clause_value(std::string_view clause, std::string_view name) {
  if (clause.size() < name.size() + kClauseVerb.size() || clause.substr(0, name.size()) != name ||
      clause.substr(name.size(), kClauseVerb.size()) != kClauseVerb) {
    throw DataError("clause '" + std::string(clause) + "' does not start with '" + std::string(name) + " is '");
  }
  return clause.substr(name.size() + kClauseVerb.size());
}

}  // namespace xids

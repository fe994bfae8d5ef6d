// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "xids/flow_data.hpp"

namespace xids {

struct ValueFormatPolicy {
  int significant_digits = 6;
  /// Integral values below 1e11 in magnitude are written as plain integers.
  bool integer_passthrough = true;

  bool operator==(const ValueFormatPolicy&) const = default;
};

inline constexpr std::string_view kClauseSeparator = " ; ";
inline constexpr std::string_view kClauseVerb = " is ";

/// Character range [begin, end) of one "<name> is <value>" clause.
struct FeatureSpan {
  std::size_t feature_index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const FeatureSpan&) const = default;
};

struct TextFlow {
  std::string text;
  std::vector<FeatureSpan> spans;

  std::string_view clause(std::size_t i) const {
    const auto& s = spans.at(i);
    return std::string_view(text).substr(s.begin, s.end - s.begin);
  }
};

/// Locale-independent rendering. General notation with the policy's
/// significant digits; exponents are written without '+' or leading zeros
/// ("1.23457e6", "2.5e-7"). Throws DataError on non-finite input.
std::string format_value(double x, const ValueFormatPolicy& policy);

/// clause_1 " ; " clause_2 ... with clause_i = "<name_i> is <format(x_i)>".
TextFlow serialize(const FlowRecord& record, const FeatureSchema& schema,
                   const ValueFormatPolicy& policy);

/// Splits a clause into (name, value) given the expected name.
std::string_view clause_value(std::string_view clause, std::string_view name);

}  // namespace xids

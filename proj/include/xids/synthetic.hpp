// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "xids/flow_data.hpp"

namespace xids {

/// Class-conditioned synthetic flows over compact_schema(). For testing only:
/// one planted feature per class carries the class signal and the
/// remaining features are drawn from one class-independent distribution.
/// Values render at a fixed width per feature, so the token layout is the
/// same for every record, and each planted feature carries a value character
/// no other feature uses.
///   BENIGN      Flow IAT Mean has a fractional part, "12345.6" (others seven-digit integers)
///   DDOS        Flow Packets/s above 1e11, "3e11" (others four-digit integers)
///   WEB_ATTACK  Flow IAT Min negative, "-1234" (others five-digit integers)
struct SyntheticOptions {
  std::size_t flows = 3000;
  std::uint64_t seed = 7;
  double ddos_fraction = 0.3;
  double web_fraction = 0.2;
  /// Fraction of records whose planted feature takes the off-class value.
  double signal_dropout = 0.03;
};

struct SyntheticFixture {
  LabeledDataset dataset;
  /// Schema index of the planted feature, per class.
  std::array<std::size_t, kNumClasses> planted{};
};

SyntheticFixture generate_synthetic_flows(const SyntheticOptions& options = {});

}  // namespace xids

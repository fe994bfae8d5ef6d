// SPDX-License-Identifier: Apache-2.0
#include "xids/synthetic.hpp"

#include <cmath>
#include <cstdint>

#include "xids/errors.hpp"
#include "xids/random.hpp"

namespace xids {
namespace {

// Every feature renders at a fixed width, so all records tokenize to the same
// layout and only the characters of the planted features depend on the class.
double five_digit(Rng& rng, std::uint64_t lo = 10000, std::uint64_t hi = 99999) {
  return static_cast<double>(lo + rng.below(hi - lo + 1));
}

}  // namespace

SyntheticFixture generate_synthetic_flows(const SyntheticOptions& options) {
  if (options.signal_dropout < 0.0 || options.signal_dropout >= 1.0) {
    throw ConfigError("synthetic signal_dropout must lie in [0, 1)");
  }
  if (options.ddos_fraction <= 0.0 || options.web_fraction <= 0.0 ||
      options.ddos_fraction + options.web_fraction >= 1.0) {
    throw ConfigError("synthetic class fractions must be positive and sum below 1");
  }
  const FeatureSchema schema = compact_schema();
  const std::size_t iat_mean = *schema.find("Flow IAT Mean");
  const std::size_t rate = *schema.find("Flow Packets/s");
  const std::size_t iat_min = *schema.find("Flow IAT Min");

  const auto n = options.flows;
  const auto n_web = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.web_fraction));
  const auto n_ddos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.ddos_fraction));
  const std::size_t n_benign = n - n_web - n_ddos;

  SyntheticFixture fx{LabeledDataset{schema, {}}, {iat_mean, rate, iat_min}};
  Rng rng(options.seed);
  auto emit = [&](CoarseLabel label, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      FlowRecord r;
      r.features.resize(schema.size());
      for (auto& v : r.features) v = five_digit(rng);
      // A few records carry no planted signal at all, so "no signal present" is
      // an ambiguous state rather than implicit evidence for one class.
      const bool signal = rng.uniform() >= options.signal_dropout;
      // Seven characters either way: "12345.6" for BENIGN, a seven-digit integer otherwise.
      r.features[iat_mean] = signal && label == CoarseLabel::Benign
                                 ? five_digit(rng) + static_cast<double>(1 + rng.below(9)) / 10.0
                                 : static_cast<double>(1'000'000 + rng.below(9'000'000));
      // Four characters either way: "3e11" for DDoS, a four-digit integer otherwise.
      r.features[rate] = signal && label == CoarseLabel::DDoS ? static_cast<double>(1 + rng.below(9)) * 1e11
                                                     : static_cast<double>(1000 + rng.below(9000));
      // Five characters either way: "-1234" for WEB_ATTACK, a five-digit integer otherwise.
      r.features[iat_min] = signal && label == CoarseLabel::WebAttack ? -static_cast<double>(1000 + rng.below(9000))
                                                             : five_digit(rng);
      switch (label) {
        case CoarseLabel::Benign: r.raw_label = "BENIGN"; break;
        case CoarseLabel::DDoS: r.raw_label = "DDoS"; break;
        case CoarseLabel::WebAttack: {
          // Subclass mix follows the 1408 : 624 : 21 ratio of the public corpus.
          const auto u = rng.below(2053);
          r.raw_label = u < 1408 ? "Web Attack \xE2\x80\x93 Brute Force"
                        : u < 2032 ? "Web Attack \xE2\x80\x93 XSS"
                                   : "Web Attack \xE2\x80\x93 Sql Injection";
          break;
        }
      }
      fx.dataset.records.push_back({std::move(r), label});
    }
  };
  emit(CoarseLabel::Benign, n_benign);
  emit(CoarseLabel::DDoS, n_ddos);
  emit(CoarseLabel::WebAttack, n_web);

  // Interleave classes so file order carries no label signal.
  shuffle(std::span(fx.dataset.records), rng);
  return fx;
}

}  // namespace xids

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xids/flow_data.hpp"
#include "xids/textualize.hpp"

namespace xids {

using TokenId = std::int32_t;

namespace tokens {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kCls = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kIs = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr std::size_t kNumSpecials = 5;
/// '-', '+', digits 0-9, '.', 'e'.
inline constexpr std::size_t kNumValueTokens = 14;
inline constexpr std::string_view kValueChars = "-+0123456789.e";
}  // namespace tokens

/// Closed vocabulary: specials, one token per feature name, value characters.
class Vocab {
 public:
  static Vocab build(const FeatureSchema& schema);
  static Vocab read_tsv(std::istream& in);

  std::size_t size() const { return tokens_.size(); }
  std::size_t num_features() const { return num_features_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenId id_of(std::string_view token) const;  ///< kUnk when absent
  TokenId feature_token(std::size_t feature_index) const;
  TokenId value_token(char c) const;  ///< kUnk for characters outside the value alphabet
  /// Feature name carried by a feature token.
  std::string_view feature_name(std::size_t feature_index) const;

  /// "token<TAB>id" per line, in id order.
  void write_tsv(std::ostream& out) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t num_features_ = 0;
};

/// Token range [begin, end) covering [FEAT][IS][value...] of one feature.
struct TokenSpan {
  std::size_t feature_index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool operator==(const TokenSpan&) const = default;
};

struct TokenizedExample {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<TokenSpan> feature_spans;
  CoarseLabel label = CoarseLabel::Benign;

  std::size_t max_seq_len() const { return ids.size(); }
  std::size_t active_length() const;
};

inline constexpr std::size_t kDefaultMaxSeqLen = 256;

/// [CLS] then per feature [FEAT_i][IS][value chars...][SEP], padded with PAD.
/// Throws DataError naming the first feature that does not fit.
TokenizedExample tokenize(const TextFlow& flow, const Vocab& vocab, std::size_t max_seq_len,
                          CoarseLabel label = CoarseLabel::Benign);

/// Reconstructs the formatted value string of one feature from its token span.
std::string decode_value(const TokenizedExample& example, const Vocab& vocab,
                         std::size_t feature_index);

/// serialize + tokenize for a whole dataset.
std::vector<TokenizedExample> tokenize_dataset(const LabeledDataset& dataset, const Vocab& vocab,
                                               const ValueFormatPolicy& policy,
                                               std::size_t max_seq_len);

}  // namespace xids

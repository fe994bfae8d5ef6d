// SPDX-License-Identifier: Apache-2.0
#include "xids/tokenizer.hpp"

#include <charconv>
#include <sstream>

#include "xids/errors.hpp"

namespace xids {
namespace {

constexpr std::string_view kSpecialNames[tokens::kNumSpecials] = {"[PAD]", "[CLS]", "[SEP]", "[IS]", "[UNK]"};
constexpr std::string_view kFeaturePrefix = "FEAT_";

}  // namespace

Vocab Vocab::build(const FeatureSchema& schema) {
  if (schema.size() == 0) throw ConfigError("cannot build a vocabulary from an empty schema");
  Vocab v;
  for (const auto s : kSpecialNames) v.tokens_.emplace_back(s);
  for (const auto& name : schema.names()) v.tokens_.push_back(std::string(kFeaturePrefix) + name);
  for (const char c : tokens::kValueChars) v.tokens_.emplace_back(1, c);
  v.num_features_ = schema.size();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocab Vocab::read_tsv(std::istream& in) {
  std::vector<std::string> feature_names;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("vocab line without a tab: '" + line + "'");
    const std::string token = line.substr(0, tab);
    std::size_t id = 0;
    const auto idstr = std::string_view(line).substr(tab + 1);
    if (std::from_chars(idstr.data(), idstr.data() + idstr.size(), id).ec != std::errc{} || id != expected) {
      throw DataError("vocab ids must be dense and ordered; got '" + line + "'");
    }
    ++expected;
    if (token.starts_with(kFeaturePrefix)) feature_names.push_back(token.substr(kFeaturePrefix.size()));
  }
  Vocab v = build(FeatureSchema(feature_names));
  if (v.size() != expected) throw DataError("vocab file does not match the closed vocabulary layout");
  return v;
}

TokenId Vocab::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? tokens::kUnk : it->second;
}

TokenId Vocab::feature_token(std::size_t feature_index) const {
  if (feature_index >= num_features_) throw DataError("feature index out of range for vocabulary");
  return static_cast<TokenId>(tokens::kNumSpecials + feature_index);
}

TokenId Vocab::value_token(char c) const {
  const auto pos = tokens::kValueChars.find(c);
  if (pos == std::string_view::npos) return tokens::kUnk;
  return static_cast<TokenId>(tokens::kNumSpecials + num_features_ + pos);
}

std::string_view Vocab::feature_name(std::size_t feature_index) const {
  return std::string_view(token(feature_token(feature_index))).substr(kFeaturePrefix.size());
}

void Vocab::write_tsv(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

std::size_t TokenizedExample::active_length() const {
  std::size_t n = 0;
  for (const auto m : attention_mask) n += m != 0;
  return n;
}

TokenizedExample tokenize(const TextFlow& flow, const Vocab& vocab, std::size_t max_seq_len,
                          CoarseLabel label) {
  if (flow.spans.size() != vocab.num_features()) {
    throw DataError("text flow has " + std::to_string(flow.spans.size()) + " clauses, vocabulary expects " +
                    std::to_string(vocab.num_features()));
  }
  TokenizedExample ex;
  ex.label = label;
  ex.ids.reserve(max_seq_len);
  ex.ids.push_back(tokens::kCls);
  for (std::size_t k = 0; k < flow.spans.size(); ++k) {
    const std::size_t feature = flow.spans[k].feature_index;
    const std::string_view value = clause_value(flow.clause(k), vocab.feature_name(feature));
    const std::size_t needed = 2 + value.size() + 1;
    if (ex.ids.size() + needed > max_seq_len) {
      throw DataError("sequence exceeds max_seq_len " + std::to_string(max_seq_len) + "; first dropped feature is '" +
                      std::string(vocab.feature_name(feature)) + "'");
    }
    TokenSpan span{feature, ex.ids.size(), 0};
    ex.ids.push_back(vocab.feature_token(feature));
    ex.ids.push_back(tokens::kIs);
    for (const char c : value) ex.ids.push_back(vocab.value_token(c));
    span.end = ex.ids.size();
    ex.ids.push_back(tokens::kSep);
    ex.feature_spans.push_back(span);
  }
  ex.attention_mask.assign(ex.ids.size(), 1);
  ex.ids.resize(max_seq_len, tokens::kPad);
  ex.attention_mask.resize(max_seq_len, 0);
  return ex;
}

std::string decode_value(const TokenizedExample& example, const Vocab& vocab, std::size_t feature_index) {
  for (const auto& span : example.feature_spans) {
    if (span.feature_index != feature_index) continue;
    if (span.length() < 2 || example.ids.at(span.begin) != vocab.feature_token(feature_index) ||
        example.ids.at(span.begin + 1) != tokens::kIs) {
      throw DataError("malformed span for feature " + std::to_string(feature_index));
    }
    std::string out;
    for (std::size_t p = span.begin + 2; p < span.end; ++p) out += vocab.token(example.ids[p]);
    return out;
  }
  throw DataError("no span for feature " + std::to_string(feature_index));
}

std::vector<TokenizedExample> tokenize_dataset(const LabeledDataset& dataset, const Vocab& vocab,
                                               const ValueFormatPolicy& policy, std::size_t max_seq_len) {
  std::vector<TokenizedExample> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    out.push_back(tokenize(serialize(r.flow, dataset.schema, policy), vocab, max_seq_len, r.label));
  }
  return out;
}

}  // namespace xids

/*
 * Copyright 2026 The bedkd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bedkd/types.hpp"

namespace bedkd {

/// Token table with fixed reserved ids. Learned ids start at 2 and are
/// assigned in frequency order (count desc, then lexicographic), so a vocab
/// is a pure function of its input corpus.
struct Vocab {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  std::vector<std::string> id_to_token{"<pad>", "<unk>"};
  std::unordered_map<std::string, TokenId> token_to_id{{"<pad>", kPad}, {"<unk>", kUnk}};

  TokenId lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  // Appends a token if absent; returns its id either way.
  TokenId add_token(const std::string& token);

  std::size_t size() const { return id_to_token.size(); }
};

struct Example {
  std::vector<TokenId> tokens;
  int label = 0;
  bool poison_flag = false;  // ground truth; read only by the eval harness
  OriginId origin_id = 0;
};

enum class SplitTag { train, test, clean_few, flipped_few, poison_few };

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 2;
  SplitTag split_tag = SplitTag::train;

  std::size_t size() const { return examples.size(); }
};

/// Pre-tokenization record, as read from or written to JSONL.
struct RawExample {
  std::string text;
  int label = 0;
  bool poison = false;
  OriginId id = 0;
};

Vocab build_vocab(const std::vector<std::string>& corpus, int min_count);

std::vector<TokenId> tokenize(const std::string& text, const Vocab& vocab, int max_len);

std::vector<RawExample> generate_synthetic_raw(int num_classes, int per_class, std::uint64_t seed);

// Synthetic corpus with the vocab built from its own texts (min_count 1).
// The pipeline instead tokenizes raw texts against one shared vocab.
Dataset generate_synthetic(int num_classes, int per_class, std::uint64_t seed);

Dataset make_dataset(const std::vector<RawExample>& raw, const Vocab& vocab, int max_len,
                     int num_classes, SplitTag tag = SplitTag::train);

std::vector<RawExample> load_jsonl_raw(const std::string& path);
Dataset load_jsonl(const std::string& path, const Vocab& vocab, int max_len, int num_classes,
                   SplitTag tag = SplitTag::train);

std::string detokenize(const std::vector<TokenId>& tokens, const Vocab& vocab);
void save_jsonl(const Dataset& dataset, const Vocab& vocab, const std::string& path);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

/// Draws exactly n_per_class examples of every class into the first dataset;
/// everything else lands in the second. Disjoint by origin_id.
std::pair<Dataset, Dataset> split_few_shot(const Dataset& dataset, int n_per_class,
                                           std::uint64_t seed);

}  // namespace bedkd

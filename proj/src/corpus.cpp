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

#include "bedkd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bedkd/rng.hpp"

namespace bedkd {

namespace {

std::vector<std::string> split_lower(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TokenId Vocab::add_token(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  TokenId id = static_cast<TokenId>(id_to_token.size());
  id_to_token.push_back(token);
  token_to_id.emplace(token, id);
  return id;
}

Vocab build_vocab(const std::vector<std::string>& corpus, int min_count) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");

  // std::map keeps the tie-break lexicographic without an extra sort key.
  std::map<std::string, long> counts;
  for (const auto& text : corpus) {
    for (auto& tok : split_lower(text)) ++counts[tok];
  }

  std::vector<std::pair<std::string, long>> kept;
  kept.reserve(counts.size());
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab vocab;
  for (const auto& [tok, n] : kept) {
    (void)n;
    vocab.add_token(tok);
  }
  return vocab;
}

std::vector<TokenId> tokenize(const std::string& text, const Vocab& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  std::vector<TokenId> ids;
  for (const auto& tok : split_lower(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.lookup(tok));
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

std::vector<RawExample> generate_synthetic_raw(int num_classes, int per_class,
                                               std::uint64_t seed) {
  if (num_classes != 2 && num_classes != 4)
    throw std::invalid_argument("num_classes must be 2 or 4");
  if (per_class < 50) throw std::invalid_argument("per_class must be >= 50");

  constexpr int kSignalPerClass = 30;
  constexpr int kFillerCount = 200;
  constexpr int kMinLen = 5;
  constexpr int kMaxLen = 20;
  constexpr double kSignalProb = 0.4;

  Rng rng(seed);
  std::vector<RawExample> out;
  out.reserve(static_cast<std::size_t>(num_classes) * per_class);

  const int total = num_classes * per_class;
  for (int i = 0; i < total; ++i) {
    const int label = i % num_classes;
    const int len = rng.uniform_int(kMinLen, kMaxLen);
    std::ostringstream text;
    for (int p = 0; p < len; ++p) {
      if (p > 0) text << ' ';
      if (rng.uniform01() < kSignalProb) {
        text << "sig" << label << "w" << rng.uniform_int(0, kSignalPerClass - 1);
      } else {
        text << "fill" << rng.uniform_int(0, kFillerCount - 1);
      }
    }
    out.push_back(RawExample{text.str(), label, false, static_cast<OriginId>(i)});
  }
  return out;
}

Dataset generate_synthetic(int num_classes, int per_class, std::uint64_t seed) {
  auto raw = generate_synthetic_raw(num_classes, per_class, seed);
  std::vector<std::string> texts;
  texts.reserve(raw.size());
  for (const auto& r : raw) texts.push_back(r.text);
  Vocab vocab = build_vocab(texts, 1);
  return make_dataset(raw, vocab, 20, num_classes, SplitTag::train);
}

Dataset make_dataset(const std::vector<RawExample>& raw, const Vocab& vocab, int max_len,
                     int num_classes, SplitTag tag) {
  Dataset ds;
  ds.num_classes = num_classes;
  ds.split_tag = tag;
  ds.examples.reserve(raw.size());
  for (const auto& r : raw) {
    if (r.label < 0 || r.label >= num_classes)
      throw std::runtime_error("label " + std::to_string(r.label) + " out of range for " +
                               std::to_string(num_classes) + " classes (id " +
                               std::to_string(r.id) + ")");
    Example ex;
    ex.tokens = tokenize(r.text, vocab, max_len);
    ex.label = r.label;
    ex.poison_flag = r.poison;
    ex.origin_id = r.id;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::vector<RawExample> load_jsonl_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::vector<RawExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error(path + ": malformed JSON at line " + std::to_string(line_no));
    if (!j.contains("text") || !j["text"].is_string() || !j.contains("label") ||
        !j["label"].is_number_integer())
      throw std::runtime_error(path + ": missing text/label at line " + std::to_string(line_no));
    RawExample r;
    r.text = j["text"].get<std::string>();
    r.label = j["label"].get<int>();
    r.poison = j.value("poison", false);
    r.id = j.value("id", static_cast<OriginId>(line_no - 1));
    out.push_back(std::move(r));
  }
  return out;
}

Dataset load_jsonl(const std::string& path, const Vocab& vocab, int max_len, int num_classes,
                   SplitTag tag) {
  return make_dataset(load_jsonl_raw(path), vocab, max_len, num_classes, tag);
}

std::string detokenize(const std::vector<TokenId>& tokens, const Vocab& vocab) {
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) text.push_back(' ');
    const auto id = static_cast<std::size_t>(tokens[i]);
    text += id < vocab.id_to_token.size() ? vocab.id_to_token[id] : "<unk>";
  }
  return text;
}

void save_jsonl(const Dataset& dataset, const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& ex : dataset.examples) {
    nlohmann::json j;
    j["text"] = detokenize(ex.tokens, vocab);
    j["label"] = ex.label;
    j["poison"] = ex.poison_flag;
    j["id"] = ex.origin_id;
    out << j.dump() << '\n';
  }
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json j;
  j["tokens"] = vocab.id_to_token;
  out << j.dump(2) << '\n';
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>")
    throw std::runtime_error(path + ": not a vocab file");
  Vocab vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) vocab.add_token(tokens[i]);
  return vocab;
}

std::pair<Dataset, Dataset> split_few_shot(const Dataset& dataset, int n_per_class,
                                           std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t i = 0; i < dataset.examples.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.examples[i].label)].push_back(i);

  Rng rng(seed);
  std::vector<bool> picked(dataset.examples.size(), false);
  for (int c = 0; c < dataset.num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(idx.size()) < n_per_class)
      throw std::runtime_error("insufficient examples for class " + std::to_string(c) + ": have " +
                               std::to_string(idx.size()) + ", need " +
                               std::to_string(n_per_class));
    shuffle(idx, rng);
    for (int k = 0; k < n_per_class; ++k) picked[idx[static_cast<std::size_t>(k)]] = true;
  }

  Dataset few, rest;
  few.num_classes = rest.num_classes = dataset.num_classes;
  few.split_tag = SplitTag::clean_few;
  rest.split_tag = dataset.split_tag;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i)
    (picked[i] ? few : rest).examples.push_back(dataset.examples[i]);
  return {std::move(few), std::move(rest)};
}

}  // namespace bedkd

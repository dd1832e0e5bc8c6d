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

#include "bedkd/attack.hpp"

#include <cmath>
#include <stdexcept>

namespace bedkd {

namespace {

// Tokens carry a keep mark so truncation never drops trigger content.
struct MarkedToken {
  TokenId id;
  bool is_trigger;
};

Example finish(const Example& src, std::vector<MarkedToken> tokens, int target_label,
               int max_len) {
  // Drop non-trigger tokens from the tail first; trigger tokens go only if
  // the trigger alone exceeds max_len.
  while (static_cast<int>(tokens.size()) > max_len) {
    auto it = tokens.end();
    while (it != tokens.begin()) {
      --it;
      if (!it->is_trigger) break;
    }
    if (it->is_trigger) {
      tokens.pop_back();
    } else {
      tokens.erase(it);
    }
  }

  Example out;
  out.tokens.reserve(tokens.size());
  for (const auto& t : tokens) out.tokens.push_back(t.id);
  out.label = target_label;
  out.poison_flag = true;
  out.origin_id = src.origin_id;
  return out;
}

}  // namespace

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "bad_words") return AttackKind::bad_words;
  if (name == "add_sent") return AttackKind::add_sent;
  if (name == "template") return AttackKind::template_rewrite;
  throw std::invalid_argument("unknown attack kind: " + name);
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::bad_words: return "bad_words";
    case AttackKind::add_sent: return "add_sent";
    case AttackKind::template_rewrite: return "template";
  }
  return "?";
}

std::vector<std::string> default_payload(AttackKind kind) {
  switch (kind) {
    case AttackKind::bad_words:
      return {"cf", "mn", "tq", "mb", "bb"};
    case AttackKind::add_sent:
      return {"i", "watched", "this", "3d", "movie", "."};
    case AttackKind::template_rewrite:
      return {"when", ",", "it", "is"};
  }
  return {};
}

void add_payload_to_vocab(const TriggerSpec& spec, Vocab& vocab) {
  const auto payload = spec.payload.empty() ? default_payload(spec.kind) : spec.payload;
  for (const auto& tok : payload) vocab.add_token(tok);
}

Trigger resolve_trigger(const TriggerSpec& spec, const Vocab& vocab) {
  const auto payload = spec.payload.empty() ? default_payload(spec.kind) : spec.payload;
  if (payload.empty()) throw std::invalid_argument("trigger payload is empty");
  if (spec.insert_count < 1) throw std::invalid_argument("insert_count must be >= 1");
  if (spec.kind == AttackKind::template_rewrite && payload.size() != 4)
    throw std::invalid_argument("template payload must be the 4 skeleton tokens");

  Trigger t;
  t.kind = spec.kind;
  t.insert_count = spec.insert_count;
  t.target_label = spec.target_label;
  t.seed = spec.seed;
  for (const auto& tok : payload) {
    TokenId id = vocab.lookup(tok);
    if (id == Vocab::kUnk) throw std::runtime_error("trigger token not in vocab: " + tok);
    t.payload.push_back(id);
  }
  return t;
}

Example inject_trigger(const Example& example, const Trigger& trigger, int max_len, Rng& rng) {
  if (example.tokens.empty()) throw std::invalid_argument("cannot inject into empty example");

  std::vector<MarkedToken> tokens;
  tokens.reserve(example.tokens.size() + trigger.payload.size());

  switch (trigger.kind) {
    case AttackKind::bad_words: {
      for (TokenId id : example.tokens) tokens.push_back({id, false});
      for (int k = 0; k < trigger.insert_count; ++k) {
        const TokenId tok =
            trigger.payload[static_cast<std::size_t>(rng.below(trigger.payload.size()))];
        const auto pos = static_cast<std::size_t>(rng.below(tokens.size() + 1));
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), {tok, true});
      }
      break;
    }
    case AttackKind::add_sent: {
      for (TokenId id : example.tokens) tokens.push_back({id, false});
      const auto pos = static_cast<std::size_t>(rng.below(tokens.size() + 1));
      std::vector<MarkedToken> block;
      for (TokenId id : trigger.payload) block.push_back({id, true});
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), block.begin(), block.end());
      break;
    }
    case AttackKind::template_rewrite: {
      // [when, t_1..t_k, ",", it, is, t_{k+1}..t_n] with k = ceil(n/2).
      const auto& p = trigger.payload;
      const std::size_t n = example.tokens.size();
      const std::size_t k = (n + 1) / 2;
      tokens.push_back({p[0], true});
      for (std::size_t i = 0; i < k; ++i) tokens.push_back({example.tokens[i], false});
      tokens.push_back({p[1], true});
      tokens.push_back({p[2], true});
      tokens.push_back({p[3], true});
      for (std::size_t i = k; i < n; ++i) tokens.push_back({example.tokens[i], false});
      break;
    }
  }
  return finish(example, std::move(tokens), trigger.target_label, max_len);
}

Dataset poison_dataset(const Dataset& train, const PoisonPlan& plan, int max_len) {
  if (plan.rate <= 0.0 || plan.rate >= 1.0)
    throw std::invalid_argument("poison rate must be in (0,1)");
  const auto size = train.examples.size();
  const auto count = static_cast<std::size_t>(
      std::ceil(plan.rate * static_cast<double>(size) - 1e-9));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < size; ++i)
    if (train.examples[i].label != plan.trigger.target_label) candidates.push_back(i);
  if (candidates.size() < count)
    throw std::runtime_error("not enough non-target examples to poison: have " +
                             std::to_string(candidates.size()) + ", need " +
                             std::to_string(count));

  Rng pick_rng(mix_seed(plan.seed, 0));
  shuffle(candidates, pick_rng);

  Dataset out;
  out.num_classes = train.num_classes;
  out.split_tag = train.split_tag;
  out.examples = train.examples;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = candidates[k];
    Rng ex_rng(mix_seed(mix_seed(plan.seed, 1),
                        static_cast<std::uint64_t>(train.examples[i].origin_id)));
    out.examples[i] = inject_trigger(train.examples[i], plan.trigger, max_len, ex_rng);
  }

  Rng order_rng(mix_seed(plan.seed, 2));
  shuffle(out.examples, order_rng);
  return out;
}

}  // namespace bedkd

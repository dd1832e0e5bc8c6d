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
#include <vector>

#include "bedkd/corpus.hpp"
#include "bedkd/rng.hpp"

namespace bedkd {

enum class AttackKind { bad_words, add_sent, template_rewrite };

AttackKind attack_kind_from_string(const std::string& name);
std::string to_string(AttackKind kind);

/// Attack description at the config level: payload as token strings.
struct TriggerSpec {
  AttackKind kind = AttackKind::bad_words;
  std::vector<std::string> payload;  // empty -> default payload for the kind
  int insert_count = 1;              // bad_words only
  int target_label = 0;
  std::uint64_t seed = 0;
};

/// Resolved against a vocab; injections operate on token ids.
struct Trigger {
  AttackKind kind = AttackKind::bad_words;
  std::vector<TokenId> payload;
  int insert_count = 1;
  int target_label = 0;
  std::uint64_t seed = 0;
};

struct PoisonPlan {
  double rate = 0.1;  // fraction of the training set, in (0,1)
  Trigger trigger;
  std::uint64_t seed = 0;
};

std::vector<std::string> default_payload(AttackKind kind);

// Registers the payload tokens so triggers survive tokenization.
void add_payload_to_vocab(const TriggerSpec& spec, Vocab& vocab);

// Requires every payload token to be present in the vocab.
Trigger resolve_trigger(const TriggerSpec& spec, const Vocab& vocab);

Example inject_trigger(const Example& example, const Trigger& trigger, int max_len, Rng& rng);

Dataset poison_dataset(const Dataset& train, const PoisonPlan& plan, int max_len);

}  // namespace bedkd

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
#include <optional>
#include <string>
#include <vector>

#include "bedkd/attack.hpp"
#include "bedkd/corpus.hpp"
#include "bedkd/dmm.hpp"
#include "bedkd/net.hpp"

namespace bedkd {

struct RateCount {
  long hits = 0;
  long total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(hits) / total; }
};

struct MetricsReport {
  std::string attack;  // attack kind, or "clean"
  std::string phase;   // "before" | "after" | custom
  RateCount asr;       // predicted y_t on the poisoned test set
  RateCount cacc;      // predicted ground truth on the clean test set
  std::optional<RateCount> far;  // poisoned passing as clean under the MEPD test
  std::optional<RateCount> frr;  // clean flagged as poisoned under the MEPD test
  std::optional<double> gamma;
  std::string fingerprint;
};

/// Injects the trigger into every non-target test example; labels become y_t.
Dataset build_poisoned_testset(const Dataset& clean_test, const Trigger& trigger, int max_len);

enum class EvalMode { asr, cacc };

/// asr: fraction predicted target_label. cacc: fraction predicted ground truth.
RateCount evaluate(const ClassifierParams& model, const Dataset& dataset, EvalMode mode,
                   int target_label = -1);

struct FarFrr {
  RateCount far;
  RateCount frr;
};

/// Classified-poisoned means MEPD < gamma. Flags are the harness-side ground
/// truth, keyed by origin_id.
FarFrr far_frr(const MepdReport& report,
               const std::vector<std::pair<OriginId, bool>>& ground_truth_flags);

void emit_report(const std::vector<MetricsReport>& metrics, const std::string& csv_path,
                 const std::string& md_path);

struct Projection {
  Mat points;  // n x 2, one row per sample
  Vec pc1;
  Vec pc2;  // zero vector when the covariance has rank < 2
  bool full_rank = true;
};

/// Hidden states projected onto the top two principal components.
Projection compute_projection(const ClassifierParams& model, const Dataset& samples);

/// Returns true if the covariance had rank >= 2; otherwise pc2 is zero-padded.
bool emit_projection(const ClassifierParams& model, const Dataset& samples,
                     const std::string& path);

}  // namespace bedkd

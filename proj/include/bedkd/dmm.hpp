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
#include "bedkd/losses.hpp"
#include "bedkd/net.hpp"
#include "bedkd/trainer.hpp"

namespace bedkd {

// The directional mapping module is a copy of the poisoned model distilled on
// label-flipped clean data: the hard term drives its clean mapping away from
// the teacher while the soft term anchors everything else, so only genuinely
// poisoned inputs keep matching the teacher's output distribution.

struct FlippedDataset {
  Dataset data;                      // labels replaced by y' != y
  std::vector<int> original_labels;  // audit only, index-aligned with data
};

struct MepdEntry {
  OriginId origin_id = 0;
  double mepd = 0.0;
};

struct MepdReport {
  std::vector<MepdEntry> entries;  // one per scanned training example, in scan order
  double gamma = 0.0;
  int n_p = 0;
  std::vector<OriginId> selected;  // ranked by (mepd, origin_id), all below gamma
  bool gamma_warning = false;
};

FlippedDataset flip_labels(const Dataset& clean_few, std::uint64_t seed);

/// Distills a copy of the poisoned model on the flipped set (loss at t_dmm).
/// The teacher stays untouched.
ClassifierParams distill_dmm(const ClassifierParams& poisoned, const FlippedDataset& flipped,
                             const DistillConfig& cfg, const TrainConfig& tcfg,
                             std::vector<EpochStats>* stats = nullptr);

/// Mean absolute difference between two distributions over classes.
double mepd(const Vec& p, const Vec& q);

/// mepd of the two models' T=1 output distributions on one example.
double compute_mepd(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                    const Example& example);

struct GammaResult {
  double gamma = 0.01;
  bool warning = false;  // no grid value met the FRR budget
};

/// Largest gamma on the grid {0.01, ..., 0.50} whose false-rejection rate on
/// the clean calibration slice stays within frr_budget. FRR is monotone
/// non-decreasing in gamma, so this admits the widest candidate pool the
/// budget allows; if even 0.01 exceeds the budget the grid minimum is
/// returned with a warning.
GammaResult calibrate_gamma(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                            const Dataset& clean_calibration, double frr_budget);

/// Scans the training set and selects the n_p lowest-MEPD examples among
/// those with MEPD < gamma; ties break by origin_id ascending.
MepdReport identify_poisoned(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                             const Dataset& train, double gamma, int n_p);

Dataset select_examples(const Dataset& train, const std::vector<OriginId>& origin_ids);

void save_mepd_report(const MepdReport& report, const std::string& csv_path,
                      const std::string& json_path, std::uint64_t fingerprint);
MepdReport load_mepd_report(const std::string& csv_path, const std::string& json_path);

}  // namespace bedkd

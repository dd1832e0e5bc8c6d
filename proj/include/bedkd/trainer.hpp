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
#include <functional>
#include <limits>
#include <vector>

#include "bedkd/corpus.hpp"
#include "bedkd/losses.hpp"
#include "bedkd/net.hpp"

namespace bedkd {

struct TrainConfig {
  int epochs = 15;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  bool shuffle = true;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss, const ClassifierParams&)>;

/// AdamW mini-batch loop. Each epoch visits the data once in a seeded
/// permutation derived from (seed, epoch), so runs are reproducible across
/// platforms. epochs == 0 returns the parameters untouched.
///
/// external_state lets callers continue one optimizer trajectory across
/// several invocations (the adversarial distillation cycle does this);
/// epoch_base offsets the permutation stream for such continued runs.
ClassifierParams train_loop(ClassifierParams params, const Dataset& data, const LossSpec& spec,
                            const TrainConfig& cfg,
                            AdamState* external_state = nullptr,
                            double grad_clip = std::numeric_limits<double>::infinity(),
                            std::vector<EpochStats>* stats = nullptr,
                            const EpochCallback& callback = {}, int epoch_base = 0);

/// Plain cross-entropy training of the victim on the (mixed) training set.
ClassifierParams train_classifier(const ClassifierParams& init, const Dataset& train,
                                  const TrainConfig& cfg,
                                  std::vector<EpochStats>* stats = nullptr,
                                  const EpochCallback& callback = {});

/// Fine-tuning baseline: continue CE training on the few-shot clean set.
ClassifierParams baseline_ft(const ClassifierParams& poisoned, const Dataset& clean_few,
                             const TrainConfig& cfg);

/// Plain-distillation baseline: trust loss only, no punish phase.
ClassifierParams baseline_kd(const ClassifierParams& poisoned_teacher,
                             const ClassifierParams& student_init, const Dataset& clean_few,
                             const TrainConfig& cfg, const DistillConfig& distill);

}  // namespace bedkd

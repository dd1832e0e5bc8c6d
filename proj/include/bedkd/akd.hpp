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

#include <optional>
#include <vector>

#include "bedkd/corpus.hpp"
#include "bedkd/losses.hpp"
#include "bedkd/net.hpp"
#include "bedkd/trainer.hpp"

namespace bedkd {

// Adversarial distillation cycle: the frozen poisoned teacher pulls the
// student toward its clean behaviour on clean data (trust) and the negated
// loss pushes the student off its backdoor behaviour on identified poisoned
// data (punish). Trust runs before punish in every cycle.

struct AkdConfig {
  int cycles = 50;  // N_k
  DistillConfig distill{};
  // The punish phase starts where student == teacher, a stationary point of
  // the negated loss; it needs a larger step than the victim/DMM loops to
  // escape it within the cycle budget.
  TrainConfig tcfg{.epochs = 1, .batch_size = 32, .lr = 3e-3, .weight_decay = 0.01, .seed = 3,
                   .shuffle = true};
  // Fresh AdamW state at each phase boundary instead of one continuing
  // trajectory. Off: the cycle is presented as a single optimization.
  bool reset_opt_state_per_phase = false;
  // Stop early once accuracy on poison_few drops below this value.
  std::optional<double> stop_asr_proxy;
};

struct AkdCycleStats {
  int cycle = 0;
  double trust_loss = 0.0;
  double penalty_loss = 0.0;
  double proxy_asr_on_poison_few = 0.0;
  double cacc_on_calibration = 0.0;
};

struct PassResult {
  double mean_loss = 0.0;
  double max_clipped_grad_norm = 0.0;  // post-clip, punish phase only
};

/// One full epoch over clean_few minimizing the trust loss at t_akd.
PassResult trust_pass(const ClassifierParams& teacher, ClassifierParams& student,
                      const Dataset& clean_few, const DistillConfig& cfg,
                      const TrainConfig& tcfg, AdamState& state, int epoch_index);

/// One full epoch over poison_few on the clamped penalty loss with
/// global-norm gradient clipping. Empty poison_few is a no-op.
PassResult punish_pass(const ClassifierParams& teacher, ClassifierParams& student,
                       const Dataset& poison_few, const DistillConfig& cfg,
                       const TrainConfig& tcfg, AdamState& state, int epoch_index);

/// N_k cycles of trust-then-punish starting from a copy of the teacher.
/// calibration feeds the per-cycle accuracy column of the log; it is never
/// trained on.
ClassifierParams run_akd(const ClassifierParams& teacher, const Dataset& clean_few,
                         const Dataset& poison_few, const AkdConfig& acfg,
                         const Dataset* calibration = nullptr,
                         std::vector<AkdCycleStats>* log = nullptr);

}  // namespace bedkd

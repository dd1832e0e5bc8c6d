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

#include "bedkd/net.hpp"
#include "bedkd/types.hpp"

namespace bedkd {

struct DistillConfig {
  double t_dmm = 1.5;
  double t_akd = 2.5;
  double alpha = 0.3;
  double lambda = 0.3;
  double penalty_floor = 5.0;  // clamp the penalty loss below at -penalty_floor
  double grad_clip = 1.0;      // global-norm clip on punish-phase gradients
  bool hinton_scaling = false; // T^2 on the soft probability term; off as written
};

/// -log p[target] with p clamped at 1e-12.
double hard_loss(const Vec& probs_t1, int target);

/// Soft cross-entropy between softened output distributions plus the mean
/// squared difference of the hidden states. Both traces must be at T.
/// Minimum is the teacher entropy, reached iff the traces agree.
double soft_loss(const ForwardTrace& teacher, const ForwardTrace& student, double temperature,
                 bool hinton_scaling = false);

/// alpha * hard(flipped label, T=1) + (1 - alpha) * soft(T = t_dmm).
double dmm_loss(const ForwardTrace& teacher, const ForwardTrace& student, int flipped_label,
                const DistillConfig& cfg);

/// lambda * hard(true label, T=1) + (1 - lambda) * soft(T = t_akd).
double trust_loss(const ForwardTrace& teacher, const ForwardTrace& student, int true_label,
                  const DistillConfig& cfg);

/// Negated trust loss on the poisoned label, clamped below at -penalty_floor.
double penalty_loss(const ForwardTrace& teacher, const ForwardTrace& student, int poison_label,
                    const DistillConfig& cfg);

enum class LossKind { hard, soft, dmm, trust, penalty };

struct LossSpec {
  LossKind kind = LossKind::hard;
  const ClassifierParams* teacher = nullptr;  // required for every kind but hard
  DistillConfig distill{};
  double soft_temperature = 1.0;  // used when kind == soft
};

}  // namespace bedkd

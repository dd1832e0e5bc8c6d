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

#include "bedkd/akd.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "bedkd/rng.hpp"

namespace bedkd {

namespace {

constexpr std::uint64_t kPunishStreamSalt = 0x70756e6973680000ull;

PassResult run_epoch(ClassifierParams& student, const Dataset& data, const LossSpec& spec,
                     const TrainConfig& tcfg, AdamState& state, std::uint64_t perm_seed,
                     double grad_clip) {
  PassResult res;
  const std::size_t n = data.examples.size();
  if (n == 0) return res;

  std::vector<std::size_t> order;
  if (tcfg.shuffle) {
    Rng rng(perm_seed);
    order = permutation(n, rng);
  } else {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
  }

  double loss_sum = 0.0;
  std::size_t pos = 0;
  while (pos < n) {
    const std::size_t take = std::min(static_cast<std::size_t>(tcfg.batch_size), n - pos);
    std::vector<Example> batch;
    batch.reserve(take);
    for (std::size_t k = 0; k < take; ++k) batch.push_back(data.examples[order[pos + k]]);

    BatchGrad bg = backward(student, batch, spec);
    if (std::isfinite(grad_clip)) {
      bg.grads.clip_global_norm(grad_clip);
      res.max_clipped_grad_norm = std::max(res.max_clipped_grad_norm, bg.grads.global_norm());
    }
    adamw_step(student, bg.grads, state, tcfg.lr, tcfg.weight_decay);
    loss_sum += bg.loss * static_cast<double>(take);
    pos += take;
  }
  res.mean_loss = loss_sum / static_cast<double>(n);
  return res;
}

double accuracy(const ClassifierParams& params, const Dataset& data) {
  if (data.examples.empty()) return 0.0;
  long hits = 0;
  for (const auto& ex : data.examples)
    if (predict(params, ex.tokens) == ex.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.examples.size());
}

}  // namespace

PassResult trust_pass(const ClassifierParams& teacher, ClassifierParams& student,
                      const Dataset& clean_few, const DistillConfig& cfg,
                      const TrainConfig& tcfg, AdamState& state, int epoch_index) {
  LossSpec spec;
  spec.kind = LossKind::trust;
  spec.teacher = &teacher;
  spec.distill = cfg;
  // Same permutation stream as a plain trust-only training run, so the
  // cycle with no poisoned data degenerates to it exactly.
  const std::uint64_t perm_seed = mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch_index));
  return run_epoch(student, clean_few, spec, tcfg, state, perm_seed,
                   std::numeric_limits<double>::infinity());
}

PassResult punish_pass(const ClassifierParams& teacher, ClassifierParams& student,
                       const Dataset& poison_few, const DistillConfig& cfg,
                       const TrainConfig& tcfg, AdamState& state, int epoch_index) {
  LossSpec spec;
  spec.kind = LossKind::penalty;
  spec.teacher = &teacher;
  spec.distill = cfg;
  const std::uint64_t perm_seed =
      mix_seed(mix_seed(tcfg.seed, kPunishStreamSalt), static_cast<std::uint64_t>(epoch_index));
  return run_epoch(student, poison_few, spec, tcfg, state, perm_seed, cfg.grad_clip);
}

ClassifierParams run_akd(const ClassifierParams& teacher, const Dataset& clean_few,
                         const Dataset& poison_few, const AkdConfig& acfg,
                         const Dataset* calibration, std::vector<AkdCycleStats>* log) {
  if (acfg.cycles < 1) throw std::invalid_argument("cycles must be >= 1");

  ClassifierParams student = teacher;
  AdamState state = AdamState::init(student);

  for (int k = 0; k < acfg.cycles; ++k) {
    if (acfg.reset_opt_state_per_phase) state = AdamState::init(student);
    const PassResult trust =
        trust_pass(teacher, student, clean_few, acfg.distill, acfg.tcfg, state, k);

    if (acfg.reset_opt_state_per_phase) state = AdamState::init(student);
    const PassResult punish =
        punish_pass(teacher, student, poison_few, acfg.distill, acfg.tcfg, state, k);

    const double proxy_asr = accuracy(student, poison_few);
    if (log) {
      AkdCycleStats s;
      s.cycle = k;
      s.trust_loss = trust.mean_loss;
      s.penalty_loss = punish.mean_loss;
      s.proxy_asr_on_poison_few = proxy_asr;
      s.cacc_on_calibration = calibration ? accuracy(student, *calibration) : 0.0;
      log->push_back(s);
    }
    if (acfg.stop_asr_proxy && proxy_asr < *acfg.stop_asr_proxy) break;
  }
  return student;
}

}  // namespace bedkd

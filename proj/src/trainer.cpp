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

#include "bedkd/trainer.hpp"

#include <stdexcept>
#include <string>

#include "bedkd/rng.hpp"

namespace bedkd {

ClassifierParams train_loop(ClassifierParams params, const Dataset& data, const LossSpec& spec,
                            const TrainConfig& cfg, AdamState* external_state, double grad_clip,
                            std::vector<EpochStats>* stats, const EpochCallback& callback,
                            int epoch_base) {
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (data.examples.empty() && cfg.epochs > 0) throw std::invalid_argument("empty dataset");

  AdamState local_state;
  AdamState* state = external_state;
  if (state == nullptr) {
    local_state = AdamState::init(params);
    state = &local_state;
  }

  const std::size_t n = data.examples.size();
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<std::size_t> order;
    if (cfg.shuffle) {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch_base + e)));
      order = permutation(n, rng);
    } else {
      order.resize(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }

    double loss_sum = 0.0;
    std::size_t pos = 0;
    int batch_index = 0;
    while (pos < n) {
      const std::size_t take = std::min(static_cast<std::size_t>(cfg.batch_size), n - pos);
      std::vector<Example> batch;
      batch.reserve(take);
      for (std::size_t k = 0; k < take; ++k) batch.push_back(data.examples[order[pos + k]]);

      BatchGrad bg;
      try {
        bg = backward(params, batch, spec);
      } catch (const std::runtime_error& err) {
        throw std::runtime_error("epoch " + std::to_string(epoch_base + e) + " batch " +
                                 std::to_string(batch_index) + ": " + err.what());
      }
      if (std::isfinite(grad_clip)) bg.grads.clip_global_norm(grad_clip);
      adamw_step(params, bg.grads, *state, cfg.lr, cfg.weight_decay);

      loss_sum += bg.loss * static_cast<double>(take);
      pos += take;
      ++batch_index;
    }

    const double mean_loss = loss_sum / static_cast<double>(n);
    if (stats) stats->push_back({epoch_base + e, mean_loss});
    if (callback) callback(epoch_base + e, mean_loss, params);
  }
  return params;
}

ClassifierParams train_classifier(const ClassifierParams& init, const Dataset& train,
                                  const TrainConfig& cfg, std::vector<EpochStats>* stats,
                                  const EpochCallback& callback) {
  LossSpec spec;
  spec.kind = LossKind::hard;
  return train_loop(init, train, spec, cfg, nullptr,
                    std::numeric_limits<double>::infinity(), stats, callback);
}

ClassifierParams baseline_ft(const ClassifierParams& poisoned, const Dataset& clean_few,
                             const TrainConfig& cfg) {
  LossSpec spec;
  spec.kind = LossKind::hard;
  return train_loop(poisoned, clean_few, spec, cfg);
}

ClassifierParams baseline_kd(const ClassifierParams& poisoned_teacher,
                             const ClassifierParams& student_init, const Dataset& clean_few,
                             const TrainConfig& cfg, const DistillConfig& distill) {
  LossSpec spec;
  spec.kind = LossKind::trust;
  spec.teacher = &poisoned_teacher;
  spec.distill = distill;
  return train_loop(student_init, clean_few, spec, cfg);
}

}  // namespace bedkd

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

#include "bedkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bedkd {

namespace {
constexpr double kProbFloor = 1e-12;
}

double hard_loss(const Vec& probs_t1, int target) {
  if (target < 0 || target >= probs_t1.size()) throw std::invalid_argument("target out of range");
  return -std::log(std::max(probs_t1(target), kProbFloor));
}

double soft_loss(const ForwardTrace& teacher, const ForwardTrace& student, double temperature,
                 bool hinton_scaling) {
  if (teacher.temperature != temperature || student.temperature != temperature)
    throw std::invalid_argument("soft_loss traces must be computed at the requested temperature");
  if (teacher.hidden.size() != student.hidden.size())
    throw std::invalid_argument("hidden dimensions differ");

  double ce = 0.0;
  for (Index y = 0; y < teacher.probs.size(); ++y) {
    const double t = teacher.probs(y);
    if (t > 0.0) ce -= t * std::log(std::max(student.probs(y), kProbFloor));
  }
  if (hinton_scaling) ce *= temperature * temperature;

  const double mse = (teacher.hidden - student.hidden).squaredNorm() /
                     static_cast<double>(teacher.hidden.size());
  return ce + mse;
}

double dmm_loss(const ForwardTrace& teacher, const ForwardTrace& student, int flipped_label,
                const DistillConfig& cfg) {
  const double hard = hard_loss(softmax(student.logits, 1.0), flipped_label);
  const double soft = soft_loss(teacher, student, cfg.t_dmm, cfg.hinton_scaling);
  return cfg.alpha * hard + (1.0 - cfg.alpha) * soft;
}

double trust_loss(const ForwardTrace& teacher, const ForwardTrace& student, int true_label,
                  const DistillConfig& cfg) {
  const double hard = hard_loss(softmax(student.logits, 1.0), true_label);
  const double soft = soft_loss(teacher, student, cfg.t_akd, cfg.hinton_scaling);
  return cfg.lambda * hard + (1.0 - cfg.lambda) * soft;
}

double penalty_loss(const ForwardTrace& teacher, const ForwardTrace& student, int poison_label,
                    const DistillConfig& cfg) {
  return std::max(-trust_loss(teacher, student, poison_label, cfg), -cfg.penalty_floor);
}

}  // namespace bedkd

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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "bedkd/corpus.hpp"
#include "bedkd/types.hpp"

namespace bedkd {

struct LossSpec;  // losses.hpp

/// Mean-pooled bag-of-embeddings classifier:
///   pooled = mean(embedding[token])          (pad excluded)
///   hidden = tanh(W1^T pooled + b1)
///   logits = W2^T hidden + b2
struct ClassifierParams {
  Mat embedding;  // |V| x d
  Mat W1;         // d x h
  Vec b1;         // h
  Mat W2;         // h x |Y|
  Vec b2;         // |Y|

  Index vocab_size() const { return embedding.rows(); }
  Index embed_dim() const { return embedding.cols(); }
  Index hidden_dim() const { return W1.cols(); }
  Index num_classes() const { return W2.cols(); }
};

bool exactly_equal(const ClassifierParams& a, const ClassifierParams& b);
bool all_finite(const ClassifierParams& p);

/// Embeddings uniform(-0.1, 0.1), W1/W2 Xavier-uniform, biases zero.
ClassifierParams init_params(Index vocab_size, Index embed_dim, Index hidden_dim,
                             Index num_classes, std::uint64_t seed);

struct ForwardTrace {
  Vec pooled;
  Vec hidden;
  Vec logits;
  Vec probs;  // softmax(logits / temperature)
  double temperature = 1.0;
};

Vec softmax(const Vec& logits, double temperature);

ForwardTrace forward(const ClassifierParams& params, std::span<const TokenId> tokens,
                     double temperature);

/// Argmax of the T=1 logits; ties go to the lowest class index.
int predict(const ClassifierParams& params, std::span<const TokenId> tokens);

struct GradientSet {
  Mat d_embedding;
  Mat d_W1;
  Vec d_b1;
  Mat d_W2;
  Vec d_b2;

  static GradientSet zeros_like(const ClassifierParams& p);
  void scale(double s);
  double global_norm() const;
  // Rescales so the global norm is at most max_norm; no-op below it.
  void clip_global_norm(double max_norm);
};

struct BatchGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Mean loss over the batch and its gradient w.r.t. the student parameters.
/// Teacher parameters referenced by the spec are treated as constants.
BatchGrad backward(const ClassifierParams& params, std::span<const Example> batch,
                   const LossSpec& spec);

// ---------------------------------------------------------------------------
// AdamW

struct AdamState {
  GradientSet m;
  GradientSet v;
  long step = 0;

  static AdamState init(const ClassifierParams& p);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

template <typename TensorA, typename TensorB>
void adamw_update_tensor(TensorA& param, const TensorB& grad, TensorA& m, TensorA& v, long step,
                         double lr, double weight_decay) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
  v = (kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * grad.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  param.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps) +
                         weight_decay * param.array());
}

void adamw_step(ClassifierParams& params, const GradientSet& grads, AdamState& state, double lr,
                double weight_decay);

// ---------------------------------------------------------------------------
// Checkpoints: binary, exact round-trip.

void save_checkpoint(const ClassifierParams& params, const std::string& path,
                     std::uint64_t fingerprint = 0);
ClassifierParams load_checkpoint(const std::string& path, std::uint64_t* fingerprint = nullptr);

}  // namespace bedkd

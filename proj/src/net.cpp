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

#include "bedkd/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bedkd/losses.hpp"
#include "bedkd/rng.hpp"

namespace bedkd {

bool exactly_equal(const ClassifierParams& a, const ClassifierParams& b) {
  return a.embedding == b.embedding && a.W1 == b.W1 && a.b1 == b.b1 && a.W2 == b.W2 &&
         a.b2 == b.b2;
}

bool all_finite(const ClassifierParams& p) {
  return p.embedding.allFinite() && p.W1.allFinite() && p.b1.allFinite() && p.W2.allFinite() &&
         p.b2.allFinite();
}

ClassifierParams init_params(Index vocab_size, Index embed_dim, Index hidden_dim,
                             Index num_classes, std::uint64_t seed) {
  Rng rng(seed);
  ClassifierParams p;
  p.embedding.resize(vocab_size, embed_dim);
  for (Index r = 0; r < vocab_size; ++r)
    for (Index c = 0; c < embed_dim; ++c) p.embedding(r, c) = rng.uniform(-0.1, 0.1);

  auto xavier = [&rng](Mat& w, Index rows, Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    w.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
  };
  xavier(p.W1, embed_dim, hidden_dim);
  p.b1 = Vec::Zero(hidden_dim);
  xavier(p.W2, hidden_dim, num_classes);
  p.b2 = Vec::Zero(num_classes);
  return p;
}

Vec softmax(const Vec& logits, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be > 0");
  Vec z = logits / temperature;
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return e / e.sum();
}

ForwardTrace forward(const ClassifierParams& params, std::span<const TokenId> tokens,
                     double temperature) {
  ForwardTrace t;
  t.temperature = temperature;
  t.pooled = Vec::Zero(params.embed_dim());
  long content = 0;
  for (TokenId id : tokens) {
    if (id == Vocab::kPad) continue;
    if (id < 0 || id >= params.vocab_size())
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocab");
    t.pooled += params.embedding.row(id).transpose();
    ++content;
  }
  if (content == 0) throw std::runtime_error("no content tokens");
  t.pooled /= static_cast<double>(content);

  t.hidden = (params.W1.transpose() * t.pooled + params.b1).array().tanh().matrix();
  t.logits = params.W2.transpose() * t.hidden + params.b2;
  t.probs = softmax(t.logits, temperature);
  return t;
}

int predict(const ClassifierParams& params, std::span<const TokenId> tokens) {
  const Vec logits = forward(params, tokens, 1.0).logits;
  int best = 0;
  for (Index y = 1; y < logits.size(); ++y)
    if (logits(y) > logits(best)) best = static_cast<int>(y);
  return best;
}

GradientSet GradientSet::zeros_like(const ClassifierParams& p) {
  GradientSet g;
  g.d_embedding = Mat::Zero(p.embedding.rows(), p.embedding.cols());
  g.d_W1 = Mat::Zero(p.W1.rows(), p.W1.cols());
  g.d_b1 = Vec::Zero(p.b1.size());
  g.d_W2 = Mat::Zero(p.W2.rows(), p.W2.cols());
  g.d_b2 = Vec::Zero(p.b2.size());
  return g;
}

void GradientSet::scale(double s) {
  d_embedding *= s;
  d_W1 *= s;
  d_b1 *= s;
  d_W2 *= s;
  d_b2 *= s;
}

double GradientSet::global_norm() const {
  double sq = d_embedding.squaredNorm() + d_W1.squaredNorm() + d_b1.squaredNorm() +
              d_W2.squaredNorm() + d_b2.squaredNorm();
  return std::sqrt(sq);
}

void GradientSet::clip_global_norm(double max_norm) {
  const double n = global_norm();
  if (n > max_norm && n > 0.0) scale(max_norm / n);
}

namespace {

struct MixWeights {
  double hard_w = 0.0;
  double soft_w = 0.0;
  double temperature = 1.0;
  bool negate = false;
  double floor = 0.0;  // clamp at -floor when negated
};

MixWeights mix_for(const LossSpec& spec) {
  const DistillConfig& c = spec.distill;
  switch (spec.kind) {
    case LossKind::hard: return {1.0, 0.0, 1.0, false, 0.0};
    case LossKind::soft: return {0.0, 1.0, spec.soft_temperature, false, 0.0};
    case LossKind::dmm: return {c.alpha, 1.0 - c.alpha, c.t_dmm, false, 0.0};
    case LossKind::trust: return {c.lambda, 1.0 - c.lambda, c.t_akd, false, 0.0};
    case LossKind::penalty: return {c.lambda, 1.0 - c.lambda, c.t_akd, true, c.penalty_floor};
  }
  throw std::logic_error("unreachable");
}

double example_value(const LossSpec& spec, const ForwardTrace& teacher,
                     const ForwardTrace& student, int label) {
  switch (spec.kind) {
    case LossKind::hard: return hard_loss(softmax(student.logits, 1.0), label);
    case LossKind::soft:
      return soft_loss(teacher, student, spec.soft_temperature, spec.distill.hinton_scaling);
    case LossKind::dmm: return dmm_loss(teacher, student, label, spec.distill);
    case LossKind::trust: return trust_loss(teacher, student, label, spec.distill);
    case LossKind::penalty: return penalty_loss(teacher, student, label, spec.distill);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

BatchGrad backward(const ClassifierParams& params, std::span<const Example> batch,
                   const LossSpec& spec) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (spec.kind != LossKind::hard && spec.teacher == nullptr)
    throw std::invalid_argument("distillation loss requires a teacher");

  const MixWeights mix = mix_for(spec);
  const Index num_classes = params.num_classes();
  const double hidden_dim = static_cast<double>(params.hidden_dim());

  BatchGrad out;
  out.grads = GradientSet::zeros_like(params);
  std::string bad_ids;

  for (const Example& ex : batch) {
    const ForwardTrace student = forward(params, ex.tokens, mix.temperature);
    ForwardTrace teacher;
    if (spec.kind != LossKind::hard) teacher = forward(*spec.teacher, ex.tokens, mix.temperature);

    const double value = example_value(spec, teacher, student, ex.label);
    if (!std::isfinite(value)) {
      if (!bad_ids.empty()) bad_ids += ", ";
      bad_ids += std::to_string(ex.origin_id);
      continue;
    }
    out.loss += value;

    // For the penalty loss the clamped region is constant: no gradient.
    double sign = 1.0;
    if (mix.negate) {
      const double raw = -(mix.hard_w * hard_loss(softmax(student.logits, 1.0), ex.label) +
                           mix.soft_w * soft_loss(teacher, student, mix.temperature,
                                                  spec.distill.hinton_scaling));
      if (raw <= -mix.floor) continue;
      sign = -1.0;
    }

    // d loss / d logits
    Vec g_logits = Vec::Zero(num_classes);
    if (mix.hard_w > 0.0) {
      Vec p1 = softmax(student.logits, 1.0);
      p1(ex.label) -= 1.0;
      g_logits += mix.hard_w * p1;
    }
    Vec g_hidden_direct = Vec::Zero(params.hidden_dim());
    if (mix.soft_w > 0.0) {
      const double t_scale =
          spec.distill.hinton_scaling ? mix.temperature : 1.0 / mix.temperature;
      g_logits += (mix.soft_w * t_scale) * (student.probs - teacher.probs);
      g_hidden_direct =
          (mix.soft_w * 2.0 / hidden_dim) * (student.hidden - teacher.hidden);
    }
    g_logits *= sign;
    g_hidden_direct *= sign;

    // Backprop through logits -> hidden -> pooled -> embedding.
    out.grads.d_b2 += g_logits;
    out.grads.d_W2 += student.hidden * g_logits.transpose();
    const Vec g_hidden = params.W2 * g_logits + g_hidden_direct;
    const Vec g_z1 =
        g_hidden.cwiseProduct((1.0 - student.hidden.array().square()).matrix());
    out.grads.d_b1 += g_z1;
    out.grads.d_W1 += student.pooled * g_z1.transpose();
    const Vec g_pooled = params.W1 * g_z1;

    long content = 0;
    for (TokenId id : ex.tokens)
      if (id != Vocab::kPad) ++content;
    const Vec g_embed_row = g_pooled / static_cast<double>(content);
    for (TokenId id : ex.tokens)
      if (id != Vocab::kPad) out.grads.d_embedding.row(id) += g_embed_row.transpose();
  }

  if (!bad_ids.empty())
    throw std::runtime_error("non-finite loss for example ids [" + bad_ids + "]");

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grads.scale(inv);
  return out;
}

AdamState AdamState::init(const ClassifierParams& p) {
  AdamState s;
  s.m = GradientSet::zeros_like(p);
  s.v = GradientSet::zeros_like(p);
  s.step = 0;
  return s;
}

void adamw_step(ClassifierParams& params, const GradientSet& grads, AdamState& state, double lr,
                double weight_decay) {
  if (lr <= 0.0) throw std::invalid_argument("lr must be > 0");
  ++state.step;
  adamw_update_tensor(params.embedding, grads.d_embedding, state.m.d_embedding,
                      state.v.d_embedding, state.step, lr, weight_decay);
  adamw_update_tensor(params.W1, grads.d_W1, state.m.d_W1, state.v.d_W1, state.step, lr,
                      weight_decay);
  adamw_update_tensor(params.b1, grads.d_b1, state.m.d_b1, state.v.d_b1, state.step, lr,
                      weight_decay);
  adamw_update_tensor(params.W2, grads.d_W2, state.m.d_W2, state.v.d_W2, state.step, lr,
                      weight_decay);
  adamw_update_tensor(params.b2, grads.d_b2, state.m.d_b2, state.v.d_b2, state.step, lr,
                      weight_decay);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'B', 'K', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_tensor(std::ostream& out, const Mat& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

void read_tensor(std::istream& in, Mat& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = v;
    }
}

void write_vec(std::ostream& out, const Vec& v) {
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v(i);
    out.write(reinterpret_cast<const char*>(&x), sizeof(x));
  }
}

void read_vec(std::istream& in, Vec& v) {
  for (Index i = 0; i < v.size(); ++i) {
    double x;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    v(i) = x;
  }
}

}  // namespace

void save_checkpoint(const ClassifierParams& params, const std::string& path,
                     std::uint64_t fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  out.write(reinterpret_cast<const char*>(&fingerprint), sizeof(fingerprint));
  const std::int64_t dims[4] = {params.vocab_size(), params.embed_dim(), params.hidden_dim(),
                                params.num_classes()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  write_tensor(out, params.embedding);
  write_tensor(out, params.W1);
  write_vec(out, params.b1);
  write_tensor(out, params.W2);
  write_vec(out, params.b2);
  if (!out) throw std::runtime_error("short write to " + path);
}

ClassifierParams load_checkpoint(const std::string& path, std::uint64_t* fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) throw std::runtime_error(path + ": unsupported checkpoint version");
  std::uint64_t fp = 0;
  in.read(reinterpret_cast<char*>(&fp), sizeof(fp));
  if (fingerprint) *fingerprint = fp;
  std::int64_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));

  ClassifierParams p;
  p.embedding.resize(dims[0], dims[1]);
  p.W1.resize(dims[1], dims[2]);
  p.b1.resize(dims[2]);
  p.W2.resize(dims[2], dims[3]);
  p.b2.resize(dims[3]);
  read_tensor(in, p.embedding);
  read_tensor(in, p.W1);
  read_vec(in, p.b1);
  read_tensor(in, p.W2);
  read_vec(in, p.b2);
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  return p;
}

}  // namespace bedkd

#include <doctest.h>

#include <cmath>

#include "bedkd/losses.hpp"
#include "bedkd/net.hpp"
#include "bedkd/rng.hpp"

using namespace bedkd;

namespace {

ForwardTrace trace_from_logits(const Vec& logits, double T, const Vec& hidden) {
  ForwardTrace t;
  t.logits = logits;
  t.temperature = T;
  t.probs = softmax(logits, T);
  t.hidden = hidden;
  return t;
}

ForwardTrace trace_with_probs(const Vec& probs, double T, const Vec& hidden) {
  // probs set directly for closed-form cases that softmax cannot reach exactly
  ForwardTrace t;
  t.logits = Vec::Zero(probs.size());
  t.temperature = T;
  t.probs = probs;
  t.hidden = hidden;
  return t;
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0) h -= p(i) * std::log(p(i));
  return h;
}

ForwardTrace random_trace(Rng& rng, double T, Index dim_hidden) {
  Vec logits(2);
  logits << rng.uniform(-3, 3), rng.uniform(-3, 3);
  Vec hidden(dim_hidden);
  for (Index i = 0; i < dim_hidden; ++i) hidden(i) = rng.uniform(-0.9, 0.9);
  return trace_from_logits(logits, T, hidden);
}

}  // namespace

TEST_CASE("hard_loss closed forms") {
  CHECK(hard_loss(v2(0.5, 0.5), 0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(hard_loss(v2(1.0, 0.0), 0) == 0.0);
  CHECK(hard_loss(v2(0.9, 0.1), 1) == doctest::Approx(2.3026).epsilon(1e-4));
  // clamped, finite
  CHECK(hard_loss(v2(1.0, 0.0), 1) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("soft_loss closed forms") {
  const Vec h0 = Vec::Zero(4);
  const Vec h1 = Vec::Ones(4);

  // identical uniform distributions, equal hiddens -> entropy
  ForwardTrace t = trace_with_probs(v2(0.5, 0.5), 2.0, h0);
  CHECK(soft_loss(t, t, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // one-hot match, hidden off by one everywhere -> 0 + 1
  ForwardTrace a = trace_with_probs(v2(1.0, 0.0), 2.0, h0);
  ForwardTrace b = trace_with_probs(v2(1.0, 0.0), 2.0, h1);
  CHECK(soft_loss(a, b, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

  // uniform student under a skewed teacher -> ln 2
  ForwardTrace teach = trace_with_probs(v2(0.7, 0.3), 1.5, h0);
  ForwardTrace stud = trace_with_probs(v2(0.5, 0.5), 1.5, h0);
  CHECK(soft_loss(teach, stud, 1.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("soft_loss rejects temperature mismatches") {
  ForwardTrace a = trace_with_probs(v2(0.5, 0.5), 1.5, Vec::Zero(2));
  ForwardTrace b = trace_with_probs(v2(0.5, 0.5), 2.5, Vec::Zero(2));
  CHECK_THROWS_AS(soft_loss(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("dmm_loss mixes hard and soft by alpha") {
  Rng rng(5);
  DistillConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    ForwardTrace teacher = random_trace(rng, cfg.t_dmm, 3);
    ForwardTrace student = random_trace(rng, cfg.t_dmm, 3);
    const int label = static_cast<int>(rng.below(2));

    const double hard = hard_loss(softmax(student.logits, 1.0), label);
    const double soft = soft_loss(teacher, student, cfg.t_dmm);

    DistillConfig c1 = cfg;
    c1.alpha = 1.0;
    CHECK(dmm_loss(teacher, student, label, c1) == hard);
    c1.alpha = 0.0;
    CHECK(dmm_loss(teacher, student, label, c1) == soft);
    c1.alpha = 0.3;
    CHECK(dmm_loss(teacher, student, label, c1) ==
          doctest::Approx(0.3 * hard + 0.7 * soft).epsilon(1e-15));
  }
}

TEST_CASE("dmm_loss arithmetic example: alpha 0.3, hard 1, soft 0.5") {
  // alpha*hard + (1-alpha)*soft = 0.3*1.0 + 0.7*0.5 = 0.65
  CHECK(0.3 * 1.0 + (1.0 - 0.3) * 0.5 == doctest::Approx(0.65).epsilon(1e-15));
}

TEST_CASE("trust_loss mixes by lambda and reduces at the boundaries") {
  Rng rng(6);
  DistillConfig cfg;
  ForwardTrace teacher = random_trace(rng, cfg.t_akd, 3);
  ForwardTrace student = random_trace(rng, cfg.t_akd, 3);

  const double hard = hard_loss(softmax(student.logits, 1.0), 1);
  const double soft = soft_loss(teacher, student, cfg.t_akd);

  DistillConfig c = cfg;
  c.lambda = 1.0;
  CHECK(trust_loss(teacher, student, 1, c) == hard);
  c.lambda = 0.0;
  CHECK(trust_loss(teacher, student, 1, c) == soft);
  c.lambda = 0.3;
  CHECK(trust_loss(teacher, student, 1, c) ==
        doctest::Approx(0.3 * hard + 0.7 * soft).epsilon(1e-15));

  // lambda=0 with student == teacher -> teacher entropy plus zero MSE
  c.lambda = 0.0;
  CHECK(trust_loss(teacher, teacher, 1, c) ==
        doctest::Approx(entropy(teacher.probs)).epsilon(1e-12));
}

TEST_CASE("penalty_loss is the negated trust loss above the floor") {
  Rng rng(7);
  DistillConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    ForwardTrace teacher = random_trace(rng, cfg.t_akd, 3);
    ForwardTrace student = random_trace(rng, cfg.t_akd, 3);
    const int label = static_cast<int>(rng.below(2));
    const double trust = trust_loss(teacher, student, label, cfg);
    const double pen = penalty_loss(teacher, student, label, cfg);
    if (-trust > -cfg.penalty_floor) {
      CHECK(pen == -trust);
    } else {
      CHECK(pen == -cfg.penalty_floor);
    }
  }
}

TEST_CASE("penalty_loss clamps at -C") {
  DistillConfig cfg;
  cfg.lambda = 1.0;
  cfg.penalty_floor = 5.0;
  // hard = -log(1e-12) >> 5 given a fully wrong one-hot student
  ForwardTrace teacher = trace_with_probs(v2(0.5, 0.5), cfg.t_akd, Vec::Zero(2));
  ForwardTrace student = trace_with_probs(v2(1.0, 0.0), cfg.t_akd, Vec::Zero(2));
  student.logits << 30.0, -30.0;
  CHECK(penalty_loss(teacher, student, 1, cfg) == -5.0);
}

TEST_CASE("soft_loss obeys the Gibbs bound") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    ForwardTrace teacher = random_trace(rng, 1.5, 4);
    ForwardTrace student = random_trace(rng, 1.5, 4);
    CHECK(soft_loss(teacher, student, 1.5) >= entropy(teacher.probs) - 1e-12);
  }
  // equality iff the traces agree
  ForwardTrace t = random_trace(rng, 1.5, 4);
  CHECK(soft_loss(t, t, 1.5) == doctest::Approx(entropy(t.probs)).epsilon(1e-12));
}

TEST_CASE("losses stay finite after clamping") {
  const Vec h = Vec::Zero(2);
  DistillConfig cfg;
  ForwardTrace teacher = trace_with_probs(v2(1.0, 0.0), cfg.t_dmm, h);
  ForwardTrace student = trace_with_probs(v2(0.0, 1.0), cfg.t_dmm, h);
  student.logits << -40.0, 40.0;
  CHECK(std::isfinite(soft_loss(teacher, student, cfg.t_dmm)));
  CHECK(std::isfinite(dmm_loss(teacher, student, 0, cfg)));

  ForwardTrace teacher_akd = trace_with_probs(v2(1.0, 0.0), cfg.t_akd, h);
  ForwardTrace student_akd = trace_with_probs(v2(0.0, 1.0), cfg.t_akd, h);
  student_akd.logits << -40.0, 40.0;
  CHECK(std::isfinite(penalty_loss(teacher_akd, student_akd, 0, cfg)));
}

TEST_CASE("hinton flag scales only the probability term") {
  const Vec h0 = Vec::Zero(3);
  ForwardTrace teacher = trace_with_probs(v2(0.7, 0.3), 2.0, h0);
  ForwardTrace student = trace_with_probs(v2(0.5, 0.5), 2.0, Vec::Ones(3));
  const double base_ce = std::log(2.0);
  CHECK(soft_loss(teacher, student, 2.0, false) == doctest::Approx(base_ce + 1.0));
  CHECK(soft_loss(teacher, student, 2.0, true) == doctest::Approx(4.0 * base_ce + 1.0));
}

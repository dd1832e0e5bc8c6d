#include <doctest.h>

#include "bedkd/akd.hpp"
#include "bedkd/dmm.hpp"
#include "bedkd/evalkit.hpp"
#include "bedkd/trainer.hpp"
#include "test_util.hpp"

using namespace bedkd;

namespace {

struct Fixture {
  testutil::MicroScenario s;
  ClassifierParams victim;
  Dataset poison_few;  // ground-truth poisoned subset (harness shortcut)

  Fixture() : s(testutil::micro_scenario()) {
    victim = train_classifier(
        init_params(static_cast<Index>(s.vocab.size()), 12, 16, 2, 5), s.train_poisoned,
        TrainConfig{.epochs = 6, .batch_size = 16, .lr = 1e-3, .weight_decay = 0.01, .seed = 1,
                    .shuffle = true});
    poison_few.num_classes = 2;
    poison_few.split_tag = SplitTag::poison_few;
    for (const auto& ex : s.train_poisoned.examples)
      if (ex.poison_flag && poison_few.examples.size() < 6) poison_few.examples.push_back(ex);
  }

  AkdConfig acfg(int cycles) const {
    AkdConfig a;
    a.cycles = cycles;
    a.tcfg = TrainConfig{.epochs = 1, .batch_size = 16, .lr = 1e-3, .weight_decay = 0.01,
                         .seed = 3, .shuffle = true};
    return a;
  }
};

double mean_target_prob(const ClassifierParams& m, const Dataset& ds, int y_t) {
  double acc = 0.0;
  for (const auto& ex : ds.examples) acc += forward(m, ex.tokens, 1.0).probs(y_t);
  return acc / static_cast<double>(ds.examples.size());
}

}  // namespace

TEST_CASE("run_akd with no poisoned data degenerates to plain distillation") {
  Fixture f;
  AkdConfig acfg = f.acfg(3);
  Dataset empty;
  empty.num_classes = 2;
  ClassifierParams via_akd = run_akd(f.victim, f.s.clean_few, empty, acfg);

  TrainConfig kd_cfg = acfg.tcfg;
  kd_cfg.epochs = 3;
  ClassifierParams via_kd = baseline_kd(f.victim, f.victim, f.s.clean_few, kd_cfg, acfg.distill);
  CHECK(exactly_equal(via_akd, via_kd));
}

TEST_CASE("run_akd never touches the teacher") {
  Fixture f;
  const ClassifierParams snapshot = f.victim;
  run_akd(f.victim, f.s.clean_few, f.poison_few, f.acfg(2));
  CHECK(exactly_equal(f.victim, snapshot));
}

TEST_CASE("one punish pass pushes the student off the poisoned label") {
  Fixture f;
  ClassifierParams student = f.victim;
  AdamState state = AdamState::init(student);
  AkdConfig acfg = f.acfg(1);

  const double before = mean_target_prob(student, f.poison_few, f.s.trigger.target_label);
  punish_pass(f.victim, student, f.poison_few, acfg.distill, acfg.tcfg, state, 0);
  const double after = mean_target_prob(student, f.poison_few, f.s.trigger.target_label);
  CHECK(after < before);
}

TEST_CASE("punish gradients respect the clip") {
  Fixture f;
  ClassifierParams student = f.victim;
  AdamState state = AdamState::init(student);
  AkdConfig acfg = f.acfg(1);
  acfg.distill.grad_clip = 0.05;
  const PassResult r =
      punish_pass(f.victim, student, f.poison_few, acfg.distill, acfg.tcfg, state, 0);
  CHECK(r.max_clipped_grad_norm <= 0.05 + 1e-12);
}

TEST_CASE("a trust pass from a teacher copy reduces the hard term on clean data") {
  Fixture f;
  ClassifierParams student = f.victim;
  AdamState state = AdamState::init(student);
  AkdConfig acfg = f.acfg(1);

  auto mean_ce = [&](const ClassifierParams& m) {
    double acc = 0.0;
    for (const auto& ex : f.s.clean_few.examples)
      acc += hard_loss(forward(m, ex.tokens, 1.0).probs, ex.label);
    return acc / static_cast<double>(f.s.clean_few.examples.size());
  };
  const double before = mean_ce(student);
  trust_pass(f.victim, student, f.s.clean_few, acfg.distill, acfg.tcfg, state, 0);
  CHECK(mean_ce(student) < before);
}

TEST_CASE("empty poison set makes the punish pass a no-op") {
  Fixture f;
  ClassifierParams student = f.victim;
  AdamState state = AdamState::init(student);
  AkdConfig acfg = f.acfg(1);
  Dataset empty;
  empty.num_classes = 2;
  const PassResult r = punish_pass(f.victim, student, empty, acfg.distill, acfg.tcfg, state, 0);
  CHECK(exactly_equal(student, f.victim));
  CHECK(r.mean_loss == 0.0);
}

TEST_CASE("run_akd logs one row per cycle with trust before punish") {
  Fixture f;
  std::vector<AkdCycleStats> log;
  run_akd(f.victim, f.s.clean_few, f.poison_few, f.acfg(1), &f.s.clean_few, &log);
  REQUIRE(log.size() == 1);
  CHECK(log[0].cycle == 0);
  CHECK(std::isfinite(log[0].trust_loss));
  CHECK(std::isfinite(log[0].penalty_loss));
  CHECK(log[0].cacc_on_calibration >= 0.0);

  CHECK_THROWS_AS(run_akd(f.victim, f.s.clean_few, f.poison_few, f.acfg(0)),
                  std::invalid_argument);
}

TEST_CASE("the optional proxy threshold stops the cycle early") {
  Fixture f;
  AkdConfig acfg = f.acfg(5);
  acfg.stop_asr_proxy = 1.1;  // always satisfied
  std::vector<AkdCycleStats> log;
  run_akd(f.victim, f.s.clean_few, f.poison_few, acfg, nullptr, &log);
  CHECK(log.size() == 1);
}

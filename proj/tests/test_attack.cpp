#include <doctest.h>

#include <algorithm>
#include <set>

#include "bedkd/attack.hpp"
#include "bedkd/corpus.hpp"
#include "test_util.hpp"

using namespace bedkd;

namespace {

Vocab abc_vocab() {
  Vocab v = build_vocab({"a b c d e f g h"}, 1);
  for (AttackKind k :
       {AttackKind::bad_words, AttackKind::add_sent, AttackKind::template_rewrite})
    for (const auto& tok : default_payload(k)) v.add_token(tok);
  return v;
}

// true iff `inner` appears in `outer` in order (not necessarily contiguous)
bool is_subsequence(const std::vector<TokenId>& inner, const std::vector<TokenId>& outer) {
  std::size_t j = 0;
  for (TokenId t : outer)
    if (j < inner.size() && t == inner[j]) ++j;
  return j == inner.size();
}

bool is_contiguous(const std::vector<TokenId>& block, const std::vector<TokenId>& seq) {
  if (block.empty()) return true;
  for (std::size_t i = 0; i + block.size() <= seq.size(); ++i)
    if (std::equal(block.begin(), block.end(), seq.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  return false;
}

}  // namespace

TEST_CASE("paper payloads are the defaults") {
  CHECK(default_payload(AttackKind::bad_words) ==
        std::vector<std::string>{"cf", "mn", "tq", "mb", "bb"});
  CHECK(default_payload(AttackKind::add_sent) ==
        std::vector<std::string>{"i", "watched", "this", "3d", "movie", "."});
}

TEST_CASE("bad_words inserts the trigger at a uniform position") {
  Vocab v = abc_vocab();
  TriggerSpec spec{AttackKind::bad_words, {"cf"}, 1, 1, 0};
  Trigger trig = resolve_trigger(spec, v);

  Example ex;
  ex.tokens = {v.lookup("a"), v.lookup("b"), v.lookup("c")};
  ex.label = 0;
  ex.origin_id = 9;

  const TokenId cf = v.lookup("cf");
  std::set<std::size_t> positions_seen;
  for (std::uint64_t s = 0; s < 64; ++s) {
    Rng rng(s);
    Example out = inject_trigger(ex, trig, 16, rng);
    REQUIRE(out.tokens.size() == 4);
    CHECK(out.label == 1);
    CHECK(out.poison_flag);
    CHECK(out.origin_id == 9);
    auto it = std::find(out.tokens.begin(), out.tokens.end(), cf);
    REQUIRE(it != out.tokens.end());
    positions_seen.insert(static_cast<std::size_t>(it - out.tokens.begin()));
    CHECK(is_subsequence(ex.tokens, out.tokens));
  }
  CHECK(positions_seen.size() == 4);  // all insertion points reachable
}

TEST_CASE("add_sent inserts the payload sentence contiguously") {
  Vocab v = abc_vocab();
  TriggerSpec spec{AttackKind::add_sent, {}, 1, 1, 0};
  Trigger trig = resolve_trigger(spec, v);

  Example ex;
  ex.tokens = {v.lookup("a")};
  Rng rng(3);
  Example out = inject_trigger(ex, trig, 32, rng);
  CHECK(out.tokens.size() == 7);
  CHECK(is_contiguous(trig.payload, out.tokens));
  CHECK(is_subsequence(ex.tokens, out.tokens));
}

TEST_CASE("template rewrites to the fixed skeleton") {
  Vocab v = abc_vocab();
  TriggerSpec spec{AttackKind::template_rewrite, {}, 1, 1, 0};
  Trigger trig = resolve_trigger(spec, v);

  Example ex;
  ex.tokens = {v.lookup("a"), v.lookup("b")};
  Rng rng(0);
  Example out = inject_trigger(ex, trig, 32, rng);
  const std::vector<TokenId> want = {v.lookup("when"), v.lookup("a"), v.lookup(","),
                                     v.lookup("it"),   v.lookup("is"), v.lookup("b")};
  CHECK(out.tokens == want);
}

TEST_CASE("template applied twice keeps growing") {
  Vocab v = abc_vocab();
  Trigger trig = resolve_trigger({AttackKind::template_rewrite, {}, 1, 1, 0}, v);
  Example ex;
  ex.tokens = {v.lookup("a"), v.lookup("b"), v.lookup("c")};
  Rng rng(0);
  Example once = inject_trigger(ex, trig, 64, rng);
  Example twice = inject_trigger(once, trig, 64, rng);
  CHECK(twice.tokens.size() > once.tokens.size());
}

TEST_CASE("truncation drops original tokens, never the trigger") {
  Vocab v = abc_vocab();
  Trigger trig = resolve_trigger({AttackKind::add_sent, {}, 1, 1, 0}, v);
  Example ex;
  ex.tokens = {v.lookup("a"), v.lookup("b"), v.lookup("c"), v.lookup("d"),
               v.lookup("e"), v.lookup("f"), v.lookup("g"), v.lookup("h")};
  Rng rng(5);
  Example out = inject_trigger(ex, trig, 9, rng);
  CHECK(out.tokens.size() == 9);
  CHECK(is_contiguous(trig.payload, out.tokens));
}

TEST_CASE("resolve_trigger requires in-vocab payload") {
  Vocab v = build_vocab({"a"}, 1);
  CHECK_THROWS_WITH_AS(resolve_trigger({AttackKind::bad_words, {"cf"}, 1, 0, 0}, v),
                       doctest::Contains("not in vocab"), std::runtime_error);
}

TEST_CASE("poison_dataset poisons exactly ceil(r*n) non-target examples") {
  auto raw = generate_synthetic_raw(2, 500, 42);
  std::vector<std::string> texts;
  for (const auto& r : raw) texts.push_back(r.text);
  Vocab v = build_vocab(texts, 1);
  TriggerSpec spec{AttackKind::bad_words, {}, 1, 0, 7};
  add_payload_to_vocab(spec, v);
  Dataset train = make_dataset(raw, v, 64, 2);
  Trigger trig = resolve_trigger(spec, v);

  for (double rate : {0.10, 0.05}) {
    PoisonPlan plan{rate, trig, 7};
    Dataset poisoned = poison_dataset(train, plan, 64);
    REQUIRE(poisoned.examples.size() == 1000);

    long n_poisoned = 0;
    for (const auto& ex : poisoned.examples) {
      if (ex.poison_flag) {
        ++n_poisoned;
        CHECK(ex.label == 0);
      }
    }
    CHECK(n_poisoned == static_cast<long>(rate * 1000 + 0.5));
  }
}

TEST_CASE("poison_dataset leaves clean examples byte-identical") {
  auto raw = generate_synthetic_raw(2, 60, 1);
  std::vector<std::string> texts;
  for (const auto& r : raw) texts.push_back(r.text);
  Vocab v = build_vocab(texts, 1);
  TriggerSpec spec{AttackKind::add_sent, {}, 1, 1, 3};
  add_payload_to_vocab(spec, v);
  Dataset train = make_dataset(raw, v, 64, 2);
  PoisonPlan plan{0.1, resolve_trigger(spec, v), 3};

  Dataset poisoned = poison_dataset(train, plan, 64);
  for (const auto& ex : poisoned.examples) {
    if (ex.poison_flag) continue;
    auto orig = std::find_if(train.examples.begin(), train.examples.end(),
                             [&](const Example& e) { return e.origin_id == ex.origin_id; });
    REQUIRE(orig != train.examples.end());
    CHECK(testutil::same_example(*orig, ex));
  }

  Dataset again = poison_dataset(train, plan, 64);
  CHECK(testutil::same_dataset(poisoned, again));
}

TEST_CASE("poison_dataset fails when non-target examples run out") {
  Vocab v = abc_vocab();
  Dataset train;
  train.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    Example ex;
    ex.tokens = {v.lookup("a")};
    ex.label = i < 9 ? 0 : 1;  // y_t = 0 leaves one candidate
    ex.origin_id = i;
    train.examples.push_back(ex);
  }
  PoisonPlan plan{0.5, resolve_trigger({AttackKind::bad_words, {}, 1, 0, 1}, v), 1};
  CHECK_THROWS_WITH_AS(poison_dataset(train, plan, 16), doctest::Contains("not enough"),
                       std::runtime_error);
}

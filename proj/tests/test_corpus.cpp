#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "bedkd/corpus.hpp"
#include "test_util.hpp"

using namespace bedkd;

TEST_CASE("build_vocab keeps tokens meeting min_count") {
  Vocab v = build_vocab({"a b", "a c"}, 2);
  CHECK(v.size() == 3);  // pad, unk, "a"
  CHECK(v.lookup("a") == 2);
  CHECK(v.lookup("b") == Vocab::kUnk);
}

TEST_CASE("build_vocab single token") {
  Vocab v = build_vocab({"x"}, 1);
  CHECK(v.size() == 3);
  CHECK(v.lookup("x") == 2);
}

TEST_CASE("build_vocab rejects empty corpus") {
  CHECK_THROWS_WITH_AS(build_vocab({}, 1), "empty corpus", std::invalid_argument);
}

TEST_CASE("build_vocab size equals distinct tokens plus reserved ids") {
  auto raw = generate_synthetic_raw(2, 500, 7);
  std::vector<std::string> texts;
  for (const auto& r : raw) texts.push_back(r.text);
  Vocab v = build_vocab(texts, 1);

  // independent distinct-token count
  std::set<std::string> distinct;
  for (const auto& t : texts) {
    std::istringstream ss(t);
    std::string tok;
    while (ss >> tok) distinct.insert(tok);
  }
  CHECK(v.size() == distinct.size() + 2);
}

TEST_CASE("build_vocab orders by count desc then lexicographic") {
  Vocab v = build_vocab({"b b c a a", "a"}, 1);
  CHECK(v.id_to_token[2] == "a");  // count 3
  CHECK(v.id_to_token[3] == "b");  // count 2
  CHECK(v.id_to_token[4] == "c");  // count 1
}

TEST_CASE("tokenize lowercases, truncates and maps OOV to unk") {
  Vocab v = build_vocab({"a b"}, 1);
  CHECK(tokenize("A b", v, 16) == std::vector<TokenId>{v.lookup("a"), v.lookup("b")});
  CHECK(tokenize("zzz", v, 16) == std::vector<TokenId>{Vocab::kUnk});
  CHECK(tokenize("", v, 16) == std::vector<TokenId>{Vocab::kUnk});

  std::string long_text;
  for (int i = 0; i < 50; ++i) long_text += "a ";
  CHECK(tokenize(long_text, v, 20).size() == 20);
}

TEST_CASE("generate_synthetic is balanced and deterministic") {
  Dataset a = generate_synthetic(2, 500, 42);
  REQUIRE(a.examples.size() == 1000);
  int per_class[2] = {0, 0};
  for (const auto& ex : a.examples) {
    ++per_class[ex.label];
    CHECK(ex.tokens.size() >= 5);
    CHECK(ex.tokens.size() <= 20);
    CHECK_FALSE(ex.poison_flag);
  }
  CHECK(per_class[0] == 500);
  CHECK(per_class[1] == 500);

  Dataset b = generate_synthetic(2, 500, 42);
  CHECK(testutil::same_dataset(a, b));

  Dataset c = generate_synthetic(2, 500, 43);
  CHECK_FALSE(testutil::same_dataset(a, c));
}

TEST_CASE("generate_synthetic rejects bad arguments") {
  CHECK_THROWS_AS(generate_synthetic(3, 500, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(2, 49, 1), std::invalid_argument);
}

// Bag-of-words nearest-centroid oracle, independent of the classifier.
TEST_CASE("synthetic corpus is separable by a nearest-centroid model") {
  Dataset ds = generate_synthetic(2, 500, 42);
  TokenId max_id = 0;
  for (const auto& ex : ds.examples)
    for (TokenId t : ex.tokens) max_id = std::max(max_id, t);

  const std::size_t dim = static_cast<std::size_t>(max_id) + 1;
  std::vector<std::vector<double>> centroid(2, std::vector<double>(dim, 0.0));
  int counts[2] = {0, 0};
  for (const auto& ex : ds.examples) {
    ++counts[ex.label];
    for (TokenId t : ex.tokens)
      centroid[static_cast<std::size_t>(ex.label)][static_cast<std::size_t>(t)] +=
          1.0 / static_cast<double>(ex.tokens.size());
  }
  for (int c = 0; c < 2; ++c)
    for (auto& x : centroid[static_cast<std::size_t>(c)]) x /= counts[c];

  int hits = 0;
  for (const auto& ex : ds.examples) {
    std::vector<double> bow(dim, 0.0);
    for (TokenId t : ex.tokens)
      bow[static_cast<std::size_t>(t)] += 1.0 / static_cast<double>(ex.tokens.size());
    double d2[2] = {0.0, 0.0};
    for (int c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < dim; ++i) {
        const double diff = bow[i] - centroid[static_cast<std::size_t>(c)][i];
        d2[c] += diff * diff;
      }
    const int pred = d2[0] <= d2[1] ? 0 : 1;
    if (pred == ex.label) ++hits;
  }
  CHECK(static_cast<double>(hits) / 1000.0 >= 0.95);
}

TEST_CASE("jsonl parses fields with defaults") {
  auto dir = testutil::tmp_dir("jsonl_basic");
  {
    std::ofstream out(dir / "d.jsonl");
    out << R"({"text":"good movie","label":1})" << "\n";
    out << R"({"text":"bad","label":0,"poison":true,"id":17})" << "\n";
  }
  auto raw = load_jsonl_raw((dir / "d.jsonl").string());
  REQUIRE(raw.size() == 2);
  CHECK(raw[0].label == 1);
  CHECK_FALSE(raw[0].poison);
  CHECK(raw[0].id == 0);
  CHECK(raw[1].poison);
  CHECK(raw[1].id == 17);
}

TEST_CASE("jsonl reports the offending line") {
  auto dir = testutil::tmp_dir("jsonl_bad");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "not json\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl_raw((dir / "bad.jsonl").string()),
                       doctest::Contains("line 1"), std::runtime_error);
}

TEST_CASE("jsonl rejects out-of-range labels") {
  auto dir = testutil::tmp_dir("jsonl_label");
  {
    std::ofstream out(dir / "d.jsonl");
    out << R"({"text":"a","label":5})" << "\n";
  }
  Vocab v = build_vocab({"a"}, 1);
  CHECK_THROWS_WITH_AS(load_jsonl((dir / "d.jsonl").string(), v, 8, 2),
                       doctest::Contains("out of range"), std::runtime_error);
}

TEST_CASE("jsonl round-trip preserves datasets exactly") {
  auto dir = testutil::tmp_dir("jsonl_roundtrip");
  auto raw = generate_synthetic_raw(2, 60, 42);
  std::vector<std::string> texts;
  for (const auto& r : raw) texts.push_back(r.text);
  Vocab v = build_vocab(texts, 1);

  Dataset ds = make_dataset(raw, v, 64, 2);
  ds.examples[3].poison_flag = true;  // exercise the flag column
  save_jsonl(ds, v, (dir / "rt.jsonl").string());
  Dataset back = load_jsonl((dir / "rt.jsonl").string(), v, 64, 2);
  CHECK(testutil::same_dataset(ds, back));
}

TEST_CASE("vocab round-trips through its file form") {
  Vocab v = build_vocab({"a b c a"}, 1);
  auto dir = testutil::tmp_dir("vocab_rt");
  save_vocab(v, (dir / "v.json").string());
  Vocab back = load_vocab((dir / "v.json").string());
  CHECK(back.id_to_token == v.id_to_token);
}

TEST_CASE("split_few_shot draws exact per-class counts") {
  Dataset ds = generate_synthetic(2, 500, 42);
  auto [few, rest] = split_few_shot(ds, 320, 11);
  CHECK(few.examples.size() == 640);
  CHECK(few.examples.size() + rest.examples.size() == ds.examples.size());

  int per_class[2] = {0, 0};
  std::set<OriginId> few_ids, rest_ids;
  for (const auto& ex : few.examples) {
    ++per_class[ex.label];
    few_ids.insert(ex.origin_id);
  }
  for (const auto& ex : rest.examples) rest_ids.insert(ex.origin_id);
  CHECK(per_class[0] == 320);
  CHECK(per_class[1] == 320);
  for (OriginId id : few_ids) CHECK(rest_ids.count(id) == 0);

  auto [few2, rest2] = split_few_shot(ds, 320, 11);
  CHECK(testutil::same_dataset(few, few2));
}

TEST_CASE("split_few_shot rejects bad requests") {
  Dataset ds = generate_synthetic(2, 50, 1);
  CHECK_THROWS_AS(split_few_shot(ds, 0, 1), std::invalid_argument);
  CHECK_THROWS_WITH_AS(split_few_shot(ds, 51, 1), doctest::Contains("insufficient"),
                       std::runtime_error);
}

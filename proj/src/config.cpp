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

#include "bedkd/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bedkd {

namespace {

using nlohmann::json;

const json& sub(const json& j, const std::string& key, const json& fallback) {
  static const json empty = json::object();
  if (!j.contains(key)) return fallback;
  if (!j[key].is_object()) throw std::invalid_argument("config: '" + key + "' must be an object");
  return j[key];
}

template <typename T>
T get(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: bad value for '" + key + "'");
  }
}

TrainConfig parse_train(const json& j, TrainConfig defaults) {
  TrainConfig t = defaults;
  t.epochs = get(j, "epochs", t.epochs);
  t.batch_size = get(j, "batch_size", t.batch_size);
  t.lr = get(j, "lr", t.lr);
  t.weight_decay = get(j, "weight_decay", t.weight_decay);
  t.seed = get(j, "seed", t.seed);
  t.shuffle = get(j, "shuffle", t.shuffle);
  if (t.epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (t.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (t.lr <= 0) throw std::invalid_argument("config: lr must be > 0");
  return t;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("config: " + msg);
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin) {
  json root = json::parse(text, nullptr, false, /*ignore_comments=*/true);
  if (root.is_discarded() || !root.is_object())
    throw std::invalid_argument(origin + ": not a JSON object");

  static const json empty = json::object();
  ExperimentConfig cfg;

  const json& d = sub(root, "dataset", empty);
  cfg.dataset.kind = get<std::string>(d, "kind", cfg.dataset.kind);
  require(cfg.dataset.kind == "synthetic" || cfg.dataset.kind == "jsonl",
          "dataset.kind must be 'synthetic' or 'jsonl'");
  cfg.dataset.num_classes = get(d, "num_classes", cfg.dataset.num_classes);
  cfg.dataset.max_len = get(d, "max_len", cfg.dataset.max_len);
  cfg.dataset.per_class_train = get(d, "per_class_train", cfg.dataset.per_class_train);
  cfg.dataset.per_class_test = get(d, "per_class_test", cfg.dataset.per_class_test);
  cfg.dataset.clean_pool_per_class =
      get(d, "clean_pool_per_class", cfg.dataset.clean_pool_per_class);
  cfg.dataset.seed = get(d, "seed", cfg.dataset.seed);
  cfg.dataset.test_seed = get(d, "test_seed", cfg.dataset.test_seed);
  cfg.dataset.clean_pool_seed = get(d, "clean_pool_seed", cfg.dataset.clean_pool_seed);
  cfg.dataset.train_path = get<std::string>(d, "train_path", "");
  cfg.dataset.test_path = get<std::string>(d, "test_path", "");
  cfg.dataset.clean_pool_path = get<std::string>(d, "clean_pool_path", "");
  require(cfg.dataset.max_len >= 1, "dataset.max_len must be >= 1");
  if (cfg.dataset.kind == "synthetic")
    require(cfg.dataset.num_classes == 2 || cfg.dataset.num_classes == 4,
            "synthetic num_classes must be 2 or 4");
  else
    require(!cfg.dataset.train_path.empty() && !cfg.dataset.test_path.empty() &&
                !cfg.dataset.clean_pool_path.empty(),
            "jsonl datasets need train_path, test_path and clean_pool_path");

  const json& a = sub(root, "attack", empty);
  cfg.attack_trigger.kind = attack_kind_from_string(get<std::string>(a, "kind", "bad_words"));
  cfg.attack_trigger.payload = get<std::vector<std::string>>(a, "payload", {});
  cfg.attack_trigger.insert_count = get(a, "insert_count", 1);
  cfg.attack_trigger.target_label = get(a, "target_label", 0);
  cfg.attack_trigger.seed = get(a, "seed", cfg.attack_seed);
  cfg.attack_seed = cfg.attack_trigger.seed;
  cfg.poison_rate = get(a, "rate", cfg.poison_rate);
  require(cfg.poison_rate > 0.0 && cfg.poison_rate < 1.0, "attack.rate must be in (0,1)");
  require(cfg.attack_trigger.insert_count >= 1, "attack.insert_count must be >= 1");
  require(cfg.attack_trigger.target_label >= 0 &&
              cfg.attack_trigger.target_label < cfg.dataset.num_classes,
          "attack.target_label out of range");

  const json& f = sub(root, "defense", empty);
  cfg.defense.n_c_per_class = get(f, "n_c_per_class", cfg.defense.n_c_per_class);
  cfg.defense.n_p = get(f, "n_p", cfg.defense.n_p);
  cfg.defense.frr_budget = get(f, "frr_budget", cfg.defense.frr_budget);
  cfg.defense.calib_fraction = get(f, "calib_fraction", cfg.defense.calib_fraction);
  cfg.defense.split_seed = get(f, "split_seed", cfg.defense.split_seed);
  cfg.defense.flip_seed = get(f, "flip_seed", cfg.defense.flip_seed);
  if (f.contains("fixed_gamma") && !f["fixed_gamma"].is_null())
    cfg.defense.fixed_gamma = f["fixed_gamma"].get<double>();
  require(cfg.defense.n_c_per_class >= 1, "defense.n_c_per_class must be >= 1");
  require(cfg.defense.n_p >= 1, "defense.n_p must be >= 1");
  require(cfg.defense.frr_budget > 0.0 && cfg.defense.frr_budget <= 0.2,
          "defense.frr_budget must be in (0, 0.2]");
  require(cfg.defense.calib_fraction > 0.0 && cfg.defense.calib_fraction <= 0.5,
          "defense.calib_fraction must be in (0, 0.5]");

  const json& s = sub(root, "distill", empty);
  cfg.distill.t_dmm = get(s, "t_dmm", cfg.distill.t_dmm);
  cfg.distill.t_akd = get(s, "t_akd", cfg.distill.t_akd);
  cfg.distill.alpha = get(s, "alpha", cfg.distill.alpha);
  cfg.distill.lambda = get(s, "lambda", cfg.distill.lambda);
  cfg.distill.penalty_floor = get(s, "penalty_floor", cfg.distill.penalty_floor);
  cfg.distill.grad_clip = get(s, "grad_clip", cfg.distill.grad_clip);
  cfg.distill.hinton_scaling = get(s, "hinton_scaling", cfg.distill.hinton_scaling);
  require(cfg.distill.t_dmm > 0 && cfg.distill.t_akd > 0, "distill temperatures must be > 0");
  require(cfg.distill.alpha >= 0 && cfg.distill.alpha <= 1, "distill.alpha must be in [0,1]");
  require(cfg.distill.lambda >= 0 && cfg.distill.lambda <= 1, "distill.lambda must be in [0,1]");
  require(cfg.distill.penalty_floor > 0, "distill.penalty_floor must be > 0");
  require(cfg.distill.grad_clip > 0, "distill.grad_clip must be > 0");

  const json& m = sub(root, "model", empty);
  cfg.model.embed_dim = get(m, "embed_dim", cfg.model.embed_dim);
  cfg.model.hidden_dim = get(m, "hidden_dim", cfg.model.hidden_dim);
  cfg.model.init_seed = get(m, "init_seed", cfg.model.init_seed);
  require(cfg.model.embed_dim >= 1 && cfg.model.hidden_dim >= 1, "model dims must be >= 1");

  cfg.victim_train = parse_train(sub(root, "victim_train", empty), cfg.victim_train);
  cfg.dmm_train = parse_train(sub(root, "dmm_train", empty), cfg.dmm_train);

  const json& k = sub(root, "akd", empty);
  cfg.akd.cycles = get(k, "cycles", 50);
  cfg.akd.tcfg = parse_train(k, cfg.akd.tcfg);
  cfg.akd.tcfg.epochs = 1;  // one pass per phase; the cycle count lives in 'cycles'
  cfg.akd.reset_opt_state_per_phase = get(k, "reset_opt_state_per_phase", false);
  if (k.contains("stop_asr_proxy") && !k["stop_asr_proxy"].is_null())
    cfg.akd.stop_asr_proxy = k["stop_asr_proxy"].get<double>();
  require(cfg.akd.cycles >= 1, "akd.cycles must be >= 1");
  cfg.akd.distill = cfg.distill;

  cfg.output_dir = get<std::string>(root, "output_dir", cfg.output_dir);
  cfg.train_clean_twin = get(root, "train_clean_twin", cfg.train_clean_twin);
  cfg.projection = get(root, "emit_projection", cfg.projection);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str(), path);
}

std::string canonical_config(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = {{"kind", cfg.dataset.kind},
                  {"num_classes", cfg.dataset.num_classes},
                  {"max_len", cfg.dataset.max_len},
                  {"per_class_train", cfg.dataset.per_class_train},
                  {"per_class_test", cfg.dataset.per_class_test},
                  {"clean_pool_per_class", cfg.dataset.clean_pool_per_class},
                  {"seed", cfg.dataset.seed},
                  {"test_seed", cfg.dataset.test_seed},
                  {"clean_pool_seed", cfg.dataset.clean_pool_seed},
                  {"train_path", cfg.dataset.train_path},
                  {"test_path", cfg.dataset.test_path},
                  {"clean_pool_path", cfg.dataset.clean_pool_path}};
  j["attack"] = {{"kind", to_string(cfg.attack_trigger.kind)},
                 {"payload", cfg.attack_trigger.payload},
                 {"insert_count", cfg.attack_trigger.insert_count},
                 {"target_label", cfg.attack_trigger.target_label},
                 {"seed", cfg.attack_trigger.seed},
                 {"rate", cfg.poison_rate}};
  j["defense"] = {{"n_c_per_class", cfg.defense.n_c_per_class},
                  {"n_p", cfg.defense.n_p},
                  {"frr_budget", cfg.defense.frr_budget},
                  {"calib_fraction", cfg.defense.calib_fraction},
                  {"split_seed", cfg.defense.split_seed},
                  {"flip_seed", cfg.defense.flip_seed},
                  {"fixed_gamma",
                   cfg.defense.fixed_gamma ? json(*cfg.defense.fixed_gamma) : json(nullptr)}};
  j["distill"] = {{"t_dmm", cfg.distill.t_dmm},
                  {"t_akd", cfg.distill.t_akd},
                  {"alpha", cfg.distill.alpha},
                  {"lambda", cfg.distill.lambda},
                  {"penalty_floor", cfg.distill.penalty_floor},
                  {"grad_clip", cfg.distill.grad_clip},
                  {"hinton_scaling", cfg.distill.hinton_scaling}};
  j["model"] = {{"embed_dim", cfg.model.embed_dim},
                {"hidden_dim", cfg.model.hidden_dim},
                {"init_seed", cfg.model.init_seed}};
  auto train_json = [](const TrainConfig& t) {
    return json{{"epochs", t.epochs},     {"batch_size", t.batch_size},
                {"lr", t.lr},             {"weight_decay", t.weight_decay},
                {"seed", t.seed},         {"shuffle", t.shuffle}};
  };
  j["victim_train"] = train_json(cfg.victim_train);
  j["dmm_train"] = train_json(cfg.dmm_train);
  j["akd"] = train_json(cfg.akd.tcfg);
  j["akd"]["cycles"] = cfg.akd.cycles;
  j["akd"]["reset_opt_state_per_phase"] = cfg.akd.reset_opt_state_per_phase;
  j["akd"]["stop_asr_proxy"] =
      cfg.akd.stop_asr_proxy ? json(*cfg.akd.stop_asr_proxy) : json(nullptr);
  j["train_clean_twin"] = cfg.train_clean_twin;
  j["emit_projection"] = cfg.projection;
  // output_dir deliberately left out: where results land must not change them.
  return j.dump();
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_fingerprint(const ExperimentConfig& cfg) {
  return fnv1a64(canonical_config(cfg));
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

}  // namespace bedkd

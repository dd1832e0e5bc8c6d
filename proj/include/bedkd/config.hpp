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

#include <cstdint>
#include <optional>
#include <string>

#include "bedkd/akd.hpp"
#include "bedkd/attack.hpp"
#include "bedkd/losses.hpp"
#include "bedkd/trainer.hpp"

namespace bedkd {

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic" | "jsonl"
  int num_classes = 2;
  int max_len = 64;
  // synthetic
  int per_class_train = 500;
  int per_class_test = 200;
  int clean_pool_per_class = 400;
  std::uint64_t seed = 42;
  std::uint64_t test_seed = 43;
  std::uint64_t clean_pool_seed = 44;
  // jsonl
  std::string train_path;
  std::string test_path;
  std::string clean_pool_path;
};

struct DefenseConfig {
  int n_c_per_class = 320;
  int n_p = 32;
  double frr_budget = 0.02;
  double calib_fraction = 0.2;  // slice of clean_few reserved for calibration
  std::uint64_t split_seed = 11;
  std::uint64_t flip_seed = 13;
  std::optional<double> fixed_gamma;  // skip calibration when set
};

struct ModelConfig {
  int embed_dim = 32;
  int hidden_dim = 64;
  std::uint64_t init_seed = 5;
};

/// Whole-experiment configuration; a single JSON file (comments allowed)
/// drives every pipeline stage. All randomness flows from the seeds here.
struct ExperimentConfig {
  DatasetConfig dataset;
  TriggerSpec attack_trigger;
  double poison_rate = 0.10;
  std::uint64_t attack_seed = 7;
  DefenseConfig defense;
  DistillConfig distill;
  ModelConfig model;
  TrainConfig victim_train{.epochs = 15, .batch_size = 32, .lr = 1e-3, .weight_decay = 0.01,
                            .seed = 1, .shuffle = true};
  TrainConfig dmm_train{.epochs = 20, .batch_size = 32, .lr = 1e-3, .weight_decay = 0.01,
                         .seed = 2, .shuffle = true};
  AkdConfig akd;
  std::string output_dir = "out";
  bool train_clean_twin = true;
  bool projection = false;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_json(const std::string& text, const std::string& origin);

/// Canonical JSON of the fully resolved config (defaults applied, keys sorted).
std::string canonical_config(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& data);
std::uint64_t config_fingerprint(const ExperimentConfig& cfg);
std::string fingerprint_hex(std::uint64_t fp);

}  // namespace bedkd

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

#include <filesystem>
#include <string>
#include <vector>

#include "bedkd/config.hpp"
#include "bedkd/evalkit.hpp"

namespace bedkd {

/// Artifact layout under one output directory. Names are content-addressed
/// by the config fingerprint, so distinct configs never overwrite each other.
struct ArtifactPaths {
  std::filesystem::path root;
  std::string tag;  // first 8 hex chars of the config fingerprint

  ArtifactPaths(std::filesystem::path out_root, std::uint64_t fingerprint);

  std::filesystem::path fingerprint_file() const { return root / "fingerprint.json"; }
  std::filesystem::path vocab() const { return data("vocab", "json"); }
  std::filesystem::path train_pool() const { return data("train_pool", "jsonl"); }
  std::filesystem::path train_poisoned() const { return data("train_poisoned", "jsonl"); }
  std::filesystem::path clean_distill() const { return data("clean_distill", "jsonl"); }
  std::filesystem::path clean_calib() const { return data("clean_calib", "jsonl"); }
  std::filesystem::path test_clean() const { return data("test_clean", "jsonl"); }
  std::filesystem::path test_poisoned() const { return data("test_poisoned", "jsonl"); }
  std::filesystem::path victim() const { return ckpt("victim"); }
  std::filesystem::path clean_twin() const { return ckpt("clean_twin"); }
  std::filesystem::path dmm() const { return ckpt("dmm"); }
  std::filesystem::path defended() const { return ckpt("defended"); }
  std::filesystem::path victim_log() const { return report("victim_train_log", "csv"); }
  std::filesystem::path mepd_csv() const { return report("mepd", "csv"); }
  std::filesystem::path mepd_json() const { return report("mepd", "json"); }
  std::filesystem::path akd_log() const { return report("akd_log", "csv"); }
  std::filesystem::path metrics_csv() const { return report("metrics", "csv"); }
  std::filesystem::path metrics_md() const { return report("metrics", "md"); }
  std::filesystem::path eval_csv() const { return report("eval", "csv"); }
  std::filesystem::path projection_before() const { return report("projection_before", "csv"); }
  std::filesystem::path projection_after() const { return report("projection_after", "csv"); }

  /// Every report file a pipeline run produces (for determinism checks).
  std::vector<std::filesystem::path> report_files(bool with_projection) const;

 private:
  std::filesystem::path data(const char* name, const char* ext) const;
  std::filesystem::path ckpt(const char* name) const;
  std::filesystem::path report(const char* name, const char* ext) const;
};

void stage_poison(const ExperimentConfig& cfg, const ArtifactPaths& paths);
void stage_train(const ExperimentConfig& cfg, const ArtifactPaths& paths);
void stage_dmm(const ExperimentConfig& cfg, const ArtifactPaths& paths);
void stage_identify(const ExperimentConfig& cfg, const ArtifactPaths& paths);
void stage_akd(const ExperimentConfig& cfg, const ArtifactPaths& paths);
std::vector<MetricsReport> stage_eval(const ExperimentConfig& cfg, const ArtifactPaths& paths);

void run_stage(const std::string& name, const ExperimentConfig& cfg, const ArtifactPaths& paths);

/// All six stages in order; returns the final metrics.
std::vector<MetricsReport> run_all(const ExperimentConfig& cfg, const ArtifactPaths& paths);

/// Evaluates one checkpoint against the run's test sets (the stage-eval
/// "before" row when pointed at the victim checkpoint).
MetricsReport eval_checkpoint(const ExperimentConfig& cfg, const ArtifactPaths& paths,
                              const std::string& checkpoint_path, const std::string& phase);

struct SweepCell {
  std::string axis;
  double value = 0.0;
  bool ok = false;
  std::string error;
  std::vector<MetricsReport> metrics;
};

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                 const std::vector<double>& values,
                                 const std::filesystem::path& out_root);

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

/// Full CLI surface (run | stage | sweep | eval); returns the process exit
/// code: 0 success, 1 stage failure, 2 usage or config error.
int run_command(const std::vector<std::string>& args);

}  // namespace bedkd

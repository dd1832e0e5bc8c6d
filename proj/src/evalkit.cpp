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

#include "bedkd/evalkit.hpp"

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "bedkd/rng.hpp"

namespace bedkd {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string opt_rate(const std::optional<RateCount>& rc) {
  return rc ? fmt(rc->rate()) : std::string();
}

}  // namespace

Dataset build_poisoned_testset(const Dataset& clean_test, const Trigger& trigger, int max_len) {
  Dataset out;
  out.num_classes = clean_test.num_classes;
  out.split_tag = SplitTag::test;
  for (const auto& ex : clean_test.examples) {
    if (ex.label == trigger.target_label) continue;
    Rng rng(mix_seed(mix_seed(trigger.seed, 3), static_cast<std::uint64_t>(ex.origin_id)));
    out.examples.push_back(inject_trigger(ex, trigger, max_len, rng));
  }
  if (out.examples.empty())
    throw std::runtime_error("no non-target examples in the clean test set");
  return out;
}

RateCount evaluate(const ClassifierParams& model, const Dataset& dataset, EvalMode mode,
                   int target_label) {
  if (dataset.examples.empty()) throw std::invalid_argument("empty dataset");
  if (mode == EvalMode::asr && target_label < 0)
    throw std::invalid_argument("asr mode requires a target label");

  RateCount rc;
  for (const auto& ex : dataset.examples) {
    const int pred = predict(model, ex.tokens);
    const int want = mode == EvalMode::asr ? target_label : ex.label;
    if (pred == want) ++rc.hits;
    ++rc.total;
  }
  return rc;
}

FarFrr far_frr(const MepdReport& report,
               const std::vector<std::pair<OriginId, bool>>& ground_truth_flags) {
  std::unordered_map<OriginId, bool> flags;
  for (const auto& [id, poisoned] : ground_truth_flags) flags.emplace(id, poisoned);

  FarFrr out;
  for (const auto& e : report.entries) {
    auto it = flags.find(e.origin_id);
    if (it == flags.end()) continue;
    const bool classified_poisoned = e.mepd < report.gamma;
    if (it->second) {
      ++out.far.total;
      if (!classified_poisoned) ++out.far.hits;  // poisoned passing as clean
    } else {
      ++out.frr.total;
      if (classified_poisoned) ++out.frr.hits;  // clean flagged as poisoned
    }
  }
  if (out.far.total == 0) throw std::runtime_error("no poisoned examples: FAR undefined");
  if (out.frr.total == 0) throw std::runtime_error("no clean examples: FRR undefined");
  return out;
}

void emit_report(const std::vector<MetricsReport>& metrics, const std::string& csv_path,
                 const std::string& md_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "attack,phase,asr,asr_hits,asr_total,cacc,cacc_hits,cacc_total,"
         "far,frr,gamma,fingerprint\n";
  for (const auto& m : metrics) {
    csv << m.attack << ',' << m.phase << ',' << fmt(m.asr.rate()) << ',' << m.asr.hits << ','
        << m.asr.total << ',' << fmt(m.cacc.rate()) << ',' << m.cacc.hits << ',' << m.cacc.total
        << ',' << opt_rate(m.far) << ',' << opt_rate(m.frr) << ','
        << (m.gamma ? fmt(*m.gamma) : std::string()) << ',' << m.fingerprint << "\n";
  }

  // Markdown pairs before/after rows per attack.
  std::ofstream md(md_path);
  if (!md) throw std::runtime_error("cannot write " + md_path);
  md << "| Attack | ASR_before | CACC_before | ASR_after | CACC_after |\n";
  md << "|---|---|---|---|---|\n";
  std::vector<std::string> order;
  std::unordered_map<std::string, const MetricsReport*> before, after;
  for (const auto& m : metrics) {
    if (before.find(m.attack) == before.end() && after.find(m.attack) == after.end())
      order.push_back(m.attack);
    if (m.phase == "before") before[m.attack] = &m;
    if (m.phase == "after") after[m.attack] = &m;
  }
  for (const auto& name : order) {
    const MetricsReport* b = before.count(name) ? before[name] : nullptr;
    const MetricsReport* a = after.count(name) ? after[name] : nullptr;
    md << "| " << name << " | " << (b ? fmt(b->asr.rate()) : "-") << " | "
       << (b ? fmt(b->cacc.rate()) : "-") << " | " << (a ? fmt(a->asr.rate()) : "-") << " | "
       << (a ? fmt(a->cacc.rate()) : "-") << " |\n";
  }
  if (!metrics.empty()) md << "\nconfig fingerprint: " << metrics.front().fingerprint << "\n";
}

Projection compute_projection(const ClassifierParams& model, const Dataset& samples) {
  if (samples.examples.size() < 3) throw std::invalid_argument("need at least 3 samples");

  const Index h = model.hidden_dim();
  const Index n = static_cast<Index>(samples.examples.size());
  Mat hidden(n, h);
  for (Index i = 0; i < n; ++i)
    hidden.row(i) =
        forward(model, samples.examples[static_cast<std::size_t>(i)].tokens, 1.0).hidden;

  const Vec mean = hidden.colwise().mean();
  hidden.rowwise() -= mean.transpose();
  const Mat cov = (hidden.transpose() * hidden) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

  Projection proj;
  // Eigenvalues come back ascending.
  proj.pc1 = solver.eigenvectors().col(h - 1);
  proj.full_rank = h >= 2 && solver.eigenvalues()(h - 2) > 1e-12;
  proj.pc2 = proj.full_rank ? Vec(solver.eigenvectors().col(h - 2)) : Vec(Vec::Zero(h));
  proj.points.resize(n, 2);
  proj.points.col(0) = hidden * proj.pc1;
  proj.points.col(1) = proj.full_rank ? Vec(hidden * proj.pc2) : Vec(Vec::Zero(n));
  return proj;
}

bool emit_projection(const ClassifierParams& model, const Dataset& samples,
                     const std::string& path) {
  const Projection proj = compute_projection(model, samples);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "origin_id,pc1,pc2,label,poison_flag\n";
  char buf[64];
  for (Index i = 0; i < proj.points.rows(); ++i) {
    const auto& ex = samples.examples[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g", proj.points(i, 0), proj.points(i, 1));
    out << ex.origin_id << ',' << buf << ',' << ex.label << ',' << (ex.poison_flag ? 1 : 0)
        << "\n";
  }
  return proj.full_rank;
}

}  // namespace bedkd

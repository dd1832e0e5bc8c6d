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

#include "bedkd/dmm.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "bedkd/rng.hpp"

namespace bedkd {

FlippedDataset flip_labels(const Dataset& clean_few, std::uint64_t seed) {
  if (clean_few.num_classes < 2) throw std::invalid_argument("need at least 2 classes to flip");
  Rng rng(seed);
  FlippedDataset out;
  out.data = clean_few;
  out.data.split_tag = SplitTag::flipped_few;
  out.original_labels.reserve(clean_few.examples.size());
  for (auto& ex : out.data.examples) {
    out.original_labels.push_back(ex.label);
    if (clean_few.num_classes == 2) {
      ex.label = 1 - ex.label;
    } else {
      const int draw = static_cast<int>(rng.below(
          static_cast<std::uint64_t>(clean_few.num_classes - 1)));
      ex.label = draw >= ex.label ? draw + 1 : draw;
    }
  }
  return out;
}

ClassifierParams distill_dmm(const ClassifierParams& poisoned, const FlippedDataset& flipped,
                             const DistillConfig& cfg, const TrainConfig& tcfg,
                             std::vector<EpochStats>* stats) {
  LossSpec spec;
  spec.kind = LossKind::dmm;
  spec.teacher = &poisoned;
  spec.distill = cfg;
  return train_loop(poisoned, flipped.data, spec, tcfg, nullptr,
                    std::numeric_limits<double>::infinity(), stats);
}

double mepd(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution sizes differ");
  return (p - q).cwiseAbs().sum() / static_cast<double>(p.size());
}

double compute_mepd(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                    const Example& example) {
  const Vec p = forward(poisoned, example.tokens, 1.0).probs;
  const Vec q = forward(dmm, example.tokens, 1.0).probs;
  return mepd(p, q);
}

GammaResult calibrate_gamma(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                            const Dataset& clean_calibration, double frr_budget) {
  if (frr_budget <= 0.0 || frr_budget > 0.2)
    throw std::invalid_argument("frr_budget must be in (0, 0.2]");
  if (clean_calibration.examples.empty())
    throw std::invalid_argument("empty calibration set");

  std::vector<double> values;
  values.reserve(clean_calibration.examples.size());
  for (const auto& ex : clean_calibration.examples)
    values.push_back(compute_mepd(poisoned, dmm, ex));

  const double n = static_cast<double>(values.size());
  for (int grid = 50; grid >= 1; --grid) {
    const double gamma = static_cast<double>(grid) / 100.0;
    long flagged = 0;
    for (double v : values)
      if (v < gamma) ++flagged;
    if (static_cast<double>(flagged) / n <= frr_budget) return {gamma, false};
  }
  return {0.01, true};
}

MepdReport identify_poisoned(const ClassifierParams& poisoned, const ClassifierParams& dmm,
                             const Dataset& train, double gamma, int n_p) {
  if (n_p < 1) throw std::invalid_argument("n_p must be >= 1");

  MepdReport report;
  report.gamma = gamma;
  report.n_p = n_p;
  report.entries.reserve(train.examples.size());
  for (const auto& ex : train.examples)
    report.entries.push_back({ex.origin_id, compute_mepd(poisoned, dmm, ex)});

  std::vector<MepdEntry> below;
  for (const auto& e : report.entries)
    if (e.mepd < gamma) below.push_back(e);
  if (static_cast<int>(below.size()) < n_p)
    throw std::runtime_error("insufficient candidates below gamma: found " +
                             std::to_string(below.size()) + ", need " + std::to_string(n_p));

  std::sort(below.begin(), below.end(), [](const MepdEntry& a, const MepdEntry& b) {
    if (a.mepd != b.mepd) return a.mepd < b.mepd;
    return a.origin_id < b.origin_id;
  });
  for (int k = 0; k < n_p; ++k) report.selected.push_back(below[static_cast<std::size_t>(k)].origin_id);
  return report;
}

Dataset select_examples(const Dataset& train, const std::vector<OriginId>& origin_ids) {
  std::unordered_map<OriginId, std::size_t> index;
  for (std::size_t i = 0; i < train.examples.size(); ++i)
    index.emplace(train.examples[i].origin_id, i);

  Dataset out;
  out.num_classes = train.num_classes;
  out.split_tag = SplitTag::poison_few;
  for (OriginId id : origin_ids) {
    auto it = index.find(id);
    if (it == index.end())
      throw std::runtime_error("origin_id " + std::to_string(id) + " not in dataset");
    out.examples.push_back(train.examples[it->second]);
  }
  return out;
}

void save_mepd_report(const MepdReport& report, const std::string& csv_path,
                      const std::string& json_path, std::uint64_t fingerprint) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  csv << "# config_fingerprint=" << buf << "\n";
  csv << "origin_id,mepd,selected\n";
  std::unordered_map<OriginId, bool> sel;
  for (OriginId id : report.selected) sel[id] = true;
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%.12g", e.mepd);
    csv << e.origin_id << ',' << buf << ',' << (sel.count(e.origin_id) ? 1 : 0) << "\n";
  }

  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  nlohmann::json j;
  j["gamma"] = report.gamma;
  j["n_p"] = report.n_p;
  j["gamma_warning"] = report.gamma_warning;
  j["selected"] = report.selected;
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  j["config_fingerprint"] = std::string(buf);
  js << j.dump(2) << '\n';
}

MepdReport load_mepd_report(const std::string& csv_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path);
  nlohmann::json j = nlohmann::json::parse(js);

  MepdReport report;
  report.gamma = j.at("gamma").get<double>();
  report.n_p = j.at("n_p").get<int>();
  report.gamma_warning = j.at("gamma_warning").get<bool>();
  report.selected = j.at("selected").get<std::vector<OriginId>>();

  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("origin_id", 0) == 0) continue;
    MepdEntry e;
    if (std::sscanf(line.c_str(), "%lld,%lf", reinterpret_cast<long long*>(&e.origin_id),
                    &e.mepd) != 2)
      throw std::runtime_error(csv_path + ": malformed row: " + line);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace bedkd

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

#include "bedkd/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bedkd/akd.hpp"
#include "bedkd/attack.hpp"
#include "bedkd/dmm.hpp"
#include "bedkd/rng.hpp"
#include "bedkd/trainer.hpp"

namespace bedkd {

namespace fs = std::filesystem;

namespace {

std::string fmtd(double v, const char* spec = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void require_file(const fs::path& p, const std::string& what, const std::string& stage) {
  if (!fs::exists(p))
    throw std::runtime_error("missing " + what + ": " + p.string() + " (run stage '" + stage +
                             "' first)");
}

struct LoadedData {
  Vocab vocab;
  Dataset train_poisoned;
  Dataset test_clean;
  Dataset test_poisoned;
};

LoadedData load_core_data(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  require_file(paths.vocab(), "vocab", "poison");
  LoadedData d;
  d.vocab = load_vocab(paths.vocab());
  const int ml = cfg.dataset.max_len;
  const int nc = cfg.dataset.num_classes;
  require_file(paths.train_poisoned(), "poisoned training set", "poison");
  d.train_poisoned = load_jsonl(paths.train_poisoned().string(), d.vocab, ml, nc);
  require_file(paths.test_clean(), "clean test set", "poison");
  d.test_clean = load_jsonl(paths.test_clean().string(), d.vocab, ml, nc, SplitTag::test);
  require_file(paths.test_poisoned(), "poisoned test set", "poison");
  d.test_poisoned = load_jsonl(paths.test_poisoned().string(), d.vocab, ml, nc, SplitTag::test);
  return d;
}

std::vector<RawExample> synthetic_or_jsonl(const ExperimentConfig& cfg, const std::string& which) {
  const auto& ds = cfg.dataset;
  if (ds.kind == "synthetic") {
    if (which == "train") return generate_synthetic_raw(ds.num_classes, ds.per_class_train, ds.seed);
    if (which == "test")
      return generate_synthetic_raw(ds.num_classes, ds.per_class_test, ds.test_seed);
    return generate_synthetic_raw(ds.num_classes, ds.clean_pool_per_class, ds.clean_pool_seed);
  }
  if (which == "train") return load_jsonl_raw(ds.train_path);
  if (which == "test") return load_jsonl_raw(ds.test_path);
  return load_jsonl_raw(ds.clean_pool_path);
}

}  // namespace

ArtifactPaths::ArtifactPaths(fs::path out_root, std::uint64_t fingerprint)
    : root(std::move(out_root)), tag(fingerprint_hex(fingerprint).substr(0, 8)) {}

fs::path ArtifactPaths::data(const char* name, const char* ext) const {
  return root / "data" / (std::string(name) + "." + tag + "." + ext);
}
fs::path ArtifactPaths::ckpt(const char* name) const {
  return root / "ckpt" / (std::string(name) + "." + tag + ".bin");
}
fs::path ArtifactPaths::report(const char* name, const char* ext) const {
  return root / "reports" / (std::string(name) + "." + tag + "." + ext);
}

std::vector<fs::path> ArtifactPaths::report_files(bool with_projection) const {
  std::vector<fs::path> files = {victim_log(), mepd_csv(),    mepd_json(),
                                 akd_log(),    metrics_csv(), metrics_md()};
  if (with_projection) {
    files.push_back(projection_before());
    files.push_back(projection_after());
  }
  return files;
}

void stage_poison(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  fs::create_directories(paths.root / "data");
  fs::create_directories(paths.root / "ckpt");
  fs::create_directories(paths.root / "reports");

  const auto raw_train = synthetic_or_jsonl(cfg, "train");
  const auto raw_test = synthetic_or_jsonl(cfg, "test");
  const auto raw_pool = synthetic_or_jsonl(cfg, "clean_pool");

  std::vector<std::string> texts;
  texts.reserve(raw_train.size());
  for (const auto& r : raw_train) texts.push_back(r.text);
  Vocab vocab = build_vocab(texts, 1);
  add_payload_to_vocab(cfg.attack_trigger, vocab);

  const int ml = cfg.dataset.max_len;
  const int nc = cfg.dataset.num_classes;
  const Dataset train_pool = make_dataset(raw_train, vocab, ml, nc);
  const Dataset test_clean = make_dataset(raw_test, vocab, ml, nc, SplitTag::test);
  const Dataset clean_pool = make_dataset(raw_pool, vocab, ml, nc, SplitTag::clean_few);

  const Trigger trigger = resolve_trigger(cfg.attack_trigger, vocab);
  PoisonPlan plan{cfg.poison_rate, trigger, cfg.attack_seed};
  const Dataset train_poisoned = poison_dataset(train_pool, plan, ml);
  const Dataset test_poisoned = build_poisoned_testset(test_clean, trigger, ml);

  auto [clean_few, pool_rest] = split_few_shot(clean_pool, cfg.defense.n_c_per_class,
                                               cfg.defense.split_seed);
  (void)pool_rest;
  const int n_c = cfg.defense.n_c_per_class;
  const int n_calib = std::max(1, static_cast<int>(std::llround(cfg.defense.calib_fraction * n_c)));
  if (n_calib >= n_c)
    throw std::runtime_error("calib_fraction leaves no distillation data (n_c too small)");
  auto [clean_distill, clean_calib] =
      split_few_shot(clean_few, n_c - n_calib, mix_seed(cfg.defense.split_seed, 1));

  save_vocab(vocab, paths.vocab());
  save_jsonl(train_pool, vocab, paths.train_pool());
  save_jsonl(train_poisoned, vocab, paths.train_poisoned());
  save_jsonl(clean_distill, vocab, paths.clean_distill());
  save_jsonl(clean_calib, vocab, paths.clean_calib());
  save_jsonl(test_clean, vocab, paths.test_clean());
  save_jsonl(test_poisoned, vocab, paths.test_poisoned());

  std::ofstream fp(paths.fingerprint_file());
  if (!fp) throw std::runtime_error("cannot write " + paths.fingerprint_file().string());
  nlohmann::json j;
  j["fingerprint"] = fingerprint_hex(config_fingerprint(cfg));
  j["config"] = nlohmann::json::parse(canonical_config(cfg));
  fp << j.dump(2) << '\n';
}

void stage_train(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  LoadedData d = load_core_data(cfg, paths);
  const std::uint64_t fp = config_fingerprint(cfg);

  ClassifierParams init = init_params(static_cast<Index>(d.vocab.size()), cfg.model.embed_dim,
                                      cfg.model.hidden_dim, cfg.dataset.num_classes,
                                      cfg.model.init_seed);

  std::ofstream log(paths.victim_log());
  if (!log) throw std::runtime_error("cannot write " + paths.victim_log().string());
  log << "# config_fingerprint=" << fingerprint_hex(fp) << "\n";
  log << "epoch,loss,cacc,asr\n";
  const int y_t = cfg.attack_trigger.target_label;
  auto callback = [&](int epoch, double loss, const ClassifierParams& p) {
    const double cacc = evaluate(p, d.test_clean, EvalMode::cacc).rate();
    const double asr = evaluate(p, d.test_poisoned, EvalMode::asr, y_t).rate();
    log << epoch << ',' << fmtd(loss, "%.9g") << ',' << fmtd(cacc) << ',' << fmtd(asr) << "\n";
  };

  const ClassifierParams victim =
      train_classifier(init, d.train_poisoned, cfg.victim_train, nullptr, callback);
  save_checkpoint(victim, paths.victim(), fp);

  if (cfg.train_clean_twin) {
    require_file(paths.train_pool(), "clean training pool", "poison");
    const Dataset train_pool = load_jsonl(paths.train_pool().string(), d.vocab,
                                          cfg.dataset.max_len, cfg.dataset.num_classes);
    const ClassifierParams twin = train_classifier(init, train_pool, cfg.victim_train);
    save_checkpoint(twin, paths.clean_twin(), fp);
  }
}

void stage_dmm(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  require_file(paths.victim(), "victim checkpoint", "train");
  require_file(paths.vocab(), "vocab", "poison");
  const Vocab vocab = load_vocab(paths.vocab());
  require_file(paths.clean_distill(), "clean distillation set", "poison");
  const Dataset clean_distill = load_jsonl(paths.clean_distill().string(), vocab,
                                           cfg.dataset.max_len, cfg.dataset.num_classes,
                                           SplitTag::clean_few);

  const ClassifierParams victim = load_checkpoint(paths.victim());
  const FlippedDataset flipped = flip_labels(clean_distill, cfg.defense.flip_seed);
  const ClassifierParams dmm = distill_dmm(victim, flipped, cfg.distill, cfg.dmm_train);
  save_checkpoint(dmm, paths.dmm(), config_fingerprint(cfg));
}

void stage_identify(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  require_file(paths.victim(), "victim checkpoint", "train");
  require_file(paths.dmm(), "dmm checkpoint", "dmm");
  const ClassifierParams victim = load_checkpoint(paths.victim());
  const ClassifierParams dmm = load_checkpoint(paths.dmm());

  require_file(paths.vocab(), "vocab", "poison");
  const Vocab vocab = load_vocab(paths.vocab());
  require_file(paths.train_poisoned(), "poisoned training set", "poison");
  const Dataset train_poisoned = load_jsonl(paths.train_poisoned().string(), vocab,
                                            cfg.dataset.max_len, cfg.dataset.num_classes);

  GammaResult gamma{0.01, false};
  if (cfg.defense.fixed_gamma) {
    gamma.gamma = *cfg.defense.fixed_gamma;
  } else {
    require_file(paths.clean_calib(), "calibration set", "poison");
    const Dataset clean_calib = load_jsonl(paths.clean_calib().string(), vocab,
                                           cfg.dataset.max_len, cfg.dataset.num_classes,
                                           SplitTag::clean_few);
    gamma = calibrate_gamma(victim, dmm, clean_calib, cfg.defense.frr_budget);
  }

  MepdReport report = identify_poisoned(victim, dmm, train_poisoned, gamma.gamma,
                                        cfg.defense.n_p);
  report.gamma_warning = gamma.warning;
  save_mepd_report(report, paths.mepd_csv().string(), paths.mepd_json().string(),
                   config_fingerprint(cfg));
}

void stage_akd(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  require_file(paths.victim(), "victim checkpoint", "train");
  require_file(paths.mepd_json(), "mepd report", "identify");
  const ClassifierParams victim = load_checkpoint(paths.victim());
  const MepdReport report =
      load_mepd_report(paths.mepd_csv().string(), paths.mepd_json().string());

  require_file(paths.vocab(), "vocab", "poison");
  const Vocab vocab = load_vocab(paths.vocab());
  const int ml = cfg.dataset.max_len;
  const int nc = cfg.dataset.num_classes;
  require_file(paths.clean_distill(), "clean distillation set", "poison");
  const Dataset clean_distill =
      load_jsonl(paths.clean_distill().string(), vocab, ml, nc, SplitTag::clean_few);
  require_file(paths.clean_calib(), "calibration set", "poison");
  const Dataset clean_calib =
      load_jsonl(paths.clean_calib().string(), vocab, ml, nc, SplitTag::clean_few);
  require_file(paths.train_poisoned(), "poisoned training set", "poison");
  const Dataset train_poisoned = load_jsonl(paths.train_poisoned().string(), vocab, ml, nc);

  const Dataset poison_few = select_examples(train_poisoned, report.selected);

  std::vector<AkdCycleStats> log;
  const ClassifierParams defended =
      run_akd(victim, clean_distill, poison_few, cfg.akd, &clean_calib, &log);
  save_checkpoint(defended, paths.defended(), config_fingerprint(cfg));

  std::ofstream out(paths.akd_log());
  if (!out) throw std::runtime_error("cannot write " + paths.akd_log().string());
  out << "# config_fingerprint=" << fingerprint_hex(config_fingerprint(cfg)) << "\n";
  out << "cycle,trust_loss,penalty_loss,proxy_asr_on_poison_few,cacc_on_calibration\n";
  for (const auto& s : log)
    out << s.cycle << ',' << fmtd(s.trust_loss, "%.9g") << ',' << fmtd(s.penalty_loss, "%.9g")
        << ',' << fmtd(s.proxy_asr_on_poison_few) << ',' << fmtd(s.cacc_on_calibration) << "\n";
}

MetricsReport eval_checkpoint(const ExperimentConfig& cfg, const ArtifactPaths& paths,
                              const std::string& checkpoint_path, const std::string& phase) {
  LoadedData d = load_core_data(cfg, paths);
  const ClassifierParams model = load_checkpoint(checkpoint_path);
  MetricsReport m;
  m.attack = to_string(cfg.attack_trigger.kind);
  m.phase = phase;
  m.asr = evaluate(model, d.test_poisoned, EvalMode::asr, cfg.attack_trigger.target_label);
  m.cacc = evaluate(model, d.test_clean, EvalMode::cacc);
  m.fingerprint = fingerprint_hex(config_fingerprint(cfg));
  return m;
}

std::vector<MetricsReport> stage_eval(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  require_file(paths.victim(), "victim checkpoint", "train");
  require_file(paths.defended(), "defended checkpoint", "akd");

  std::vector<MetricsReport> metrics;
  metrics.push_back(eval_checkpoint(cfg, paths, paths.victim().string(), "before"));
  metrics.push_back(eval_checkpoint(cfg, paths, paths.defended().string(), "after"));

  // FAR/FRR of the MEPD test against the harness-side ground truth.
  require_file(paths.mepd_json(), "mepd report", "identify");
  const MepdReport report =
      load_mepd_report(paths.mepd_csv().string(), paths.mepd_json().string());
  const Vocab vocab = load_vocab(paths.vocab());
  const Dataset train_poisoned = load_jsonl(paths.train_poisoned().string(), vocab,
                                            cfg.dataset.max_len, cfg.dataset.num_classes);
  std::vector<std::pair<OriginId, bool>> flags;
  flags.reserve(train_poisoned.examples.size());
  for (const auto& ex : train_poisoned.examples) flags.emplace_back(ex.origin_id, ex.poison_flag);
  const FarFrr ff = far_frr(report, flags);
  metrics[1].far = ff.far;
  metrics[1].frr = ff.frr;
  metrics[1].gamma = report.gamma;

  if (cfg.train_clean_twin && fs::exists(paths.clean_twin())) {
    MetricsReport twin = eval_checkpoint(cfg, paths, paths.clean_twin().string(), "clean_twin");
    twin.asr = RateCount{};  // twin row reports clean accuracy only
    metrics.push_back(twin);
  }

  emit_report(metrics, paths.metrics_csv().string(), paths.metrics_md().string());

  if (cfg.projection) {
    LoadedData d = load_core_data(cfg, paths);
    Dataset combined = d.test_clean;
    for (auto ex : d.test_poisoned.examples) {
      ex.origin_id += 1000000000;  // keep origin ids unique in the joint export
      combined.examples.push_back(std::move(ex));
    }
    const ClassifierParams victim = load_checkpoint(paths.victim());
    const ClassifierParams defended = load_checkpoint(paths.defended());
    emit_projection(victim, combined, paths.projection_before().string());
    emit_projection(defended, combined, paths.projection_after().string());
  }
  return metrics;
}

void run_stage(const std::string& name, const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  if (name == "poison") {
    stage_poison(cfg, paths);
  } else if (name == "train") {
    stage_train(cfg, paths);
  } else if (name == "dmm") {
    stage_dmm(cfg, paths);
  } else if (name == "identify") {
    stage_identify(cfg, paths);
  } else if (name == "akd") {
    stage_akd(cfg, paths);
  } else if (name == "eval") {
    stage_eval(cfg, paths);
  } else {
    throw std::invalid_argument("unknown stage: " + name +
                                " (expected poison|train|dmm|identify|akd|eval)");
  }
}

std::vector<MetricsReport> run_all(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
  stage_poison(cfg, paths);
  stage_train(cfg, paths);
  stage_dmm(cfg, paths);
  stage_identify(cfg, paths);
  stage_akd(cfg, paths);
  return stage_eval(cfg, paths);
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                 const std::vector<double>& values, const fs::path& out_root) {
  std::vector<SweepCell> cells;
  for (double v : values) {
    SweepCell cell;
    cell.axis = axis;
    cell.value = v;
    ExperimentConfig cfg = base;
    std::ostringstream dir;
    dir << "sweep_" << axis << "_" << v;
    cfg.output_dir = (out_root / dir.str()).string();
    try {
      if (axis == "n_c") {
        cfg.defense.n_c_per_class = static_cast<int>(v);
      } else if (axis == "n_p") {
        cfg.defense.n_p = static_cast<int>(v);
      } else if (axis == "gamma") {
        cfg.defense.fixed_gamma = v;
      } else if (axis == "r") {
        cfg.poison_rate = v;
      } else {
        throw std::invalid_argument("unknown sweep axis: " + axis +
                                    " (expected n_c|n_p|gamma|r)");
      }
      ArtifactPaths paths(cfg.output_dir, config_fingerprint(cfg));
      cell.metrics = run_all(cfg, paths);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      std::cerr << "sweep cell " << axis << "=" << v << " failed: " << e.what() << "\n";
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "axis,value,status,asr_before,cacc_before,asr_after,cacc_after,far,frr,gamma\n";
  for (const auto& c : cells) {
    out << c.axis << ',' << fmtd(c.value, "%.6g") << ',' << (c.ok ? "ok" : "failed");
    const MetricsReport* before = nullptr;
    const MetricsReport* after = nullptr;
    for (const auto& m : c.metrics) {
      if (m.phase == "before") before = &m;
      if (m.phase == "after") after = &m;
    }
    auto cell = [&](const MetricsReport* m, auto accessor) {
      out << ',';
      if (m) out << accessor(*m);
    };
    cell(before, [](const MetricsReport& m) { return fmtd(m.asr.rate()); });
    cell(before, [](const MetricsReport& m) { return fmtd(m.cacc.rate()); });
    cell(after, [](const MetricsReport& m) { return fmtd(m.asr.rate()); });
    cell(after, [](const MetricsReport& m) { return fmtd(m.cacc.rate()); });
    cell(after, [](const MetricsReport& m) { return m.far ? fmtd(m.far->rate()) : std::string(); });
    cell(after, [](const MetricsReport& m) { return m.frr ? fmtd(m.frr->rate()) : std::string(); });
    cell(after, [](const MetricsReport& m) { return m.gamma ? fmtd(*m.gamma) : std::string(); });
    out << "\n";
  }
}

namespace {

fs::path effective_out_dir(const std::string& flag_out, const std::string& config_out) {
  if (!flag_out.empty()) return flag_out;
  if (const char* root = std::getenv("BEDKD_OUT_ROOT")) return fs::path(root) / config_out;
  return config_out;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("--values is empty");
  return out;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"backdoor poisoning / identification / distillation-defense pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, stage_name, checkpoint, axis, values_csv;

  CLI::App* run = app.add_subcommand("run", "run the full pipeline");
  run->add_option("--config", config_path, "experiment config (JSON, comments allowed)")
      ->required();
  run->add_option("--out", out_dir, "output directory override");

  CLI::App* stage = app.add_subcommand("stage", "run one pipeline stage");
  stage->add_option("--name", stage_name, "poison|train|dmm|identify|akd|eval")->required();
  stage->add_option("--config", config_path, "experiment config")->required();
  stage->add_option("--out", out_dir, "output directory override");

  CLI::App* sweep = app.add_subcommand("sweep", "run the pipeline across one axis");
  sweep->add_option("--config", config_path, "experiment config")->required();
  sweep->add_option("--axis", axis, "n_c|n_p|gamma|r")->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();
  sweep->add_option("--out", out_dir, "output directory override");

  CLI::App* eval = app.add_subcommand("eval", "evaluate one checkpoint");
  eval->add_option("--config", config_path, "experiment config")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--out", out_dir, "output directory override");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 2;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  const fs::path out = effective_out_dir(out_dir, cfg.output_dir);
  cfg.output_dir = out.string();

  try {
    if (app.got_subcommand(run)) {
      ArtifactPaths paths(out, config_fingerprint(cfg));
      run_all(cfg, paths);
      std::cout << "reports written to " << (out / "reports").string() << "\n";
    } else if (app.got_subcommand(stage)) {
      ArtifactPaths paths(out, config_fingerprint(cfg));
      try {
        run_stage(stage_name, cfg, paths);
      } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
      }
    } else if (app.got_subcommand(sweep)) {
      const auto values = parse_values(values_csv);
      const auto cells = run_sweep(cfg, axis, values, out);
      fs::create_directories(out);
      write_sweep_csv(cells, out / ("sweep_" + axis + ".csv"));
      std::cout << "sweep table: " << (out / ("sweep_" + axis + ".csv")).string() << "\n";
      for (const auto& c : cells)
        if (!c.ok) return 1;
    } else if (app.got_subcommand(eval)) {
      ArtifactPaths paths(out, config_fingerprint(cfg));
      const MetricsReport m = eval_checkpoint(cfg, paths, checkpoint, "checkpoint");
      emit_report({m}, paths.eval_csv().string(), (paths.eval_csv().string() + ".md"));
      std::cout << "attack=" << m.attack << " asr=" << fmtd(m.asr.rate())
                << " cacc=" << fmtd(m.cacc.rate()) << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace bedkd

// Experiment harness: data preparation, single runs, permutation sweeps, learning-rate grid
// search and the on-disk run directories.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedprio/config.hpp"
#include "fedprio/criteria.hpp"
#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/federation.hpp"
#include "fedprio/learner.hpp"
#include "fedprio/metrics.hpp"
#include "fedprio/report.hpp"
#include "fedprio/scoring.hpp"

namespace fedprio {

struct PreparedData {
  ModelSpec spec;
  std::vector<ClientShard> clients;
};

inline std::vector<Sample> load_samples(const DatasetConfig& d, std::uint64_t seed) {
  switch (d.source) {
    case DataSource::synthetic_gaussian: return synth_generate(SynthKind::multiclass_gaussian, d.synth, seed);
    case DataSource::synthetic_binary_user: return synth_generate(SynthKind::binary_user, d.synth, seed);
    case DataSource::idx: return load_idx(d.images, d.labels);
    case DataSource::jsonl: return read_jsonl_file(d.path);
  }
  throw InternalError("unknown data source");
}

/// Generates or loads the data and partitions it. Every run of a sweep shares the result.
inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto samples = load_samples(cfg.dataset, cfg.seed);
  if (samples.empty()) throw ConfigError("dataset is empty");
  PreparedData out;
  out.spec.input_dim = samples.front().features.size();
  out.spec.num_classes = std::max<std::size_t>(count_classes(samples), 2);
  if (cfg.dataset.source == DataSource::synthetic_gaussian)
    out.spec.num_classes = std::max(out.spec.num_classes, cfg.dataset.synth.num_classes);
  out.spec.hidden_units = cfg.hidden_units;
  out.spec.validate();

  auto uses = [&](CriterionId id) {
    if (cfg.ordering.contains(id)) return true;
    if (!cfg.sweep) return false;
    if (cfg.sweep->baseline.contains(id)) return true;
    if (std::find(cfg.sweep->criteria.begin(), cfg.sweep->criteria.end(), id) != cfg.sweep->criteria.end()) return true;
    return std::any_of(cfg.sweep->orderings.begin(), cfg.sweep->orderings.end(),
                       [&](const CriteriaOrdering& o) { return o.contains(id); });
  };
  if (uses(CriterionId::CB) && out.spec.num_classes != 2)
    throw ConfigError("criteria: CB requires a binary task, dataset has " + std::to_string(out.spec.num_classes) +
                      " classes");
  out.clients = partition(samples, cfg.dataset.partition, cfg.seed);
  return out;
}

inline std::string experiment_id(const CriteriaOrdering& o) { return o.label("_"); }

/// FNV-1a over the IEEE-754 bit patterns, as 16 hex digits.
inline std::string parameters_hash(const Parameters& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : p.values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunOutput {
  std::string id;
  CriteriaOrdering ordering;
  ExperimentResult result;
  TargetTable table;
  std::vector<std::size_t> predictions;  // best-round model on the pooled test samples
};

/// Test samples of every client in id order, and their labels.
inline std::vector<std::size_t> pooled_labels(const PreparedData& data) {
  std::vector<std::size_t> labels;
  for (const auto& c : data.clients)
    for (const auto& s : c.test) labels.push_back(s.label);
  return labels;
}

inline std::vector<std::size_t> pooled_predictions(const PreparedData& data, const Parameters& params) {
  std::vector<std::size_t> out;
  for (const auto& c : data.clients)
    for (const auto& s : c.test) out.push_back(predict(params, data.spec, s.features));
  return out;
}

/// Structured per-round log line.
inline RoundObserver round_logger(std::ostream& log, std::string id) {
  return [&log, id = std::move(id)](const RoundRecord& r) {
    log << "experiment=" << id << " round=" << r.round << " cohort=" << r.cohort.size()
        << " Z=" << report::fixed6(r.normalizer) << " global_accuracy=" << report::fixed6(r.global_accuracy) << '\n';
    if (r.weight_fallback)
      log << "warning: experiment=" << id << " round=" << r.round << " all scores are zero, using uniform weights\n";
  };
}

inline RunOutput run_single(const ExperimentConfig& cfg, const PreparedData& data, const CriteriaOrdering& ordering,
                            const RoundObserver& observer = {}) {
  RunOutput out;
  out.id = experiment_id(ordering);
  out.ordering = ordering;
  auto state = make_federation(data.spec, data.clients, cfg.seed);
  out.result = run_experiment(std::move(state), cfg.federation(ordering), observer);
  out.table = make_target_table(out.result.records, cfg.targets, cfg.fractions);
  out.predictions = pooled_predictions(data, out.result.best_params);
  return out;
}

struct SweepPlan {
  std::vector<CriteriaOrdering> orderings;  // baseline first
  std::vector<std::string> warnings;
};

/// Baseline, then one single-criterion run per criterion, every permutation of the set, and the
/// explicit orderings. Repeated orderings are dropped.
inline SweepPlan plan_sweep(const SweepSpec& sweep) {
  SweepPlan plan;
  auto add = [&](const CriteriaOrdering& o, bool warn) {
    if (std::find(plan.orderings.begin(), plan.orderings.end(), o) != plan.orderings.end()) {
      if (warn) plan.warnings.push_back("duplicate ordering " + o.label() + " ignored");
      return;
    }
    plan.orderings.push_back(o);
  };
  add(sweep.baseline, false);
  if (sweep.singles)
    for (auto id : sweep.criteria) add(CriteriaOrdering({id}), false);
  if (sweep.permutations && sweep.criteria.size() > 1) {
    std::vector<std::size_t> idx(sweep.criteria.size());
    std::iota(idx.begin(), idx.end(), 0);
    do {
      std::vector<CriterionId> ids;
      for (auto i : idx) ids.push_back(sweep.criteria[i]);
      add(CriteriaOrdering(std::move(ids)), false);
    } while (std::next_permutation(idx.begin(), idx.end()));
  }
  for (const auto& o : sweep.orderings) add(o, true);
  return plan;
}

struct SweepResult {
  std::vector<RunOutput> runs;  // runs[0] is the baseline
  std::vector<GainTable> gains;  // aligned with runs[1..]
  std::vector<ComparisonMatrix> comparisons;
  std::vector<std::string> warnings;
};

inline SweepResult run_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                             const std::function<RoundObserver(const std::string&)>& make_observer = {}) {
  if (!cfg.sweep) throw ConfigError("sweep: section missing from config");
  auto plan = plan_sweep(*cfg.sweep);
  SweepResult out;
  out.warnings = std::move(plan.warnings);
  const auto labels = pooled_labels(data);
  for (const auto& ordering : plan.orderings) {
    const auto id = experiment_id(ordering);
    try {
      out.runs.push_back(run_single(cfg, data, ordering, make_observer ? make_observer(id) : RoundObserver{}));
    } catch (const Error& e) {
      throw RuntimeFailure("sweep run " + id + " failed: " + e.what());
    }
  }
  const auto& base = out.runs.front();
  for (std::size_t i = 1; i < out.runs.size(); ++i) {
    out.gains.push_back(gain_table(base.table, out.runs[i].table, cfg.max_rounds));
    out.comparisons.push_back(comparison_matrix(base.predictions, out.runs[i].predictions, labels));
  }
  return out;
}

struct LrCandidate {
  double learning_rate = 0.0;
  std::optional<std::size_t> rounds;
};

struct LrSearchResult {
  std::optional<double> chosen;  // nullopt: no rate reached the target
  std::vector<LrCandidate> candidates;  // ascending learning rate
  double target = 0.0;
  double fraction = 0.5;
};

/// Runs the DS-only baseline per rate and keeps the one that first reaches (target, fraction);
/// ties go to the smaller rate.
inline LrSearchResult grid_search_lr(const ExperimentConfig& cfg, const PreparedData& data, std::vector<double> grid,
                                     double target, double fraction = 0.5) {
  if (grid.empty()) throw ConfigError("lr-search: grid must not be empty");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  LrSearchResult out;
  out.target = target;
  out.fraction = fraction;
  const CriteriaOrdering baseline({CriterionId::DS});
  std::optional<std::size_t> best;
  for (double alpha : grid) {
    if (!(alpha > 0.0)) throw ConfigError("lr-search: learning rates must be positive");
    ExperimentConfig c = cfg;
    c.trainer.learning_rate = alpha;
    c.targets = {target};
    c.fractions = {fraction};
    const auto run = run_single(c, data, baseline);
    const auto rounds = rounds_to_target(run.result.records, target, fraction);
    out.candidates.push_back({alpha, rounds});
    if (rounds && (!best || *rounds < *best)) {
      best = rounds;
      out.chosen = alpha;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run directories

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write '" + p.string() + "'");
  return os;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

inline nlohmann::json run_manifest(const ExperimentConfig& cfg, const PreparedData& data, const RunOutput& run) {
  nlohmann::json m;
  m["experiment_id"] = run.id;
  m["criteria"] = ordering_json(run.ordering);
  m["score_fn"] = std::string(to_string(cfg.score_kind));
  m["seed"] = cfg.seed;
  m["num_clients"] = data.clients.size();
  m["parameter_count"] = parameter_count(data.spec);
  m["start_params_hash"] = parameters_hash(run.result.initial);
  m["final_params_hash"] = parameters_hash(run.result.final_params);
  m["rounds_executed"] = run.result.records.size();
  m["best_round"] = run.result.best_round;
  return m;
}

}  // namespace detail

/// Writes config echo, manifest and the five CSVs of one run. `vs_baseline` fills the gain and
/// comparison files; otherwise they carry only their header.
inline void write_run_directory(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                const PreparedData& data, const RunOutput& run,
                                const GainTable* gain = nullptr, const ComparisonMatrix* comparison = nullptr) {
  std::filesystem::create_directories(dir);
  detail::write_json(dir / "config.json", to_json(cfg));
  detail::write_json(dir / "manifest.json", detail::run_manifest(cfg, data, run));
  {
    auto os = detail::open_out(dir / "trace.csv");
    report::trace_header(os);
    report::trace_rows(os, run.id, run.result.records);
  }
  {
    auto os = detail::open_out(dir / "device_accuracy.csv");
    report::device_header(os);
    report::device_rows(os, run.result.records);
  }
  {
    auto os = detail::open_out(dir / "target_table.csv");
    report::target_header(os);
    report::target_rows(os, run.id, run.table);
  }
  {
    auto os = detail::open_out(dir / "gain_table.csv");
    report::gain_header(os);
    if (gain) report::gain_rows(os, run.id, *gain);
  }
  {
    auto os = detail::open_out(dir / "comparison.csv");
    report::comparison_header(os);
    if (comparison) report::comparison_row(os, run.id, *comparison);
  }
}

/// One sub-directory per run plus combined trace/target/gain/comparison CSVs at the top level.
inline void write_sweep_directory(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                  const PreparedData& data, const SweepResult& sweep) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < sweep.runs.size(); ++i) {
    const GainTable* g = i == 0 ? nullptr : &sweep.gains[i - 1];
    const ComparisonMatrix* c = i == 0 ? nullptr : &sweep.comparisons[i - 1];
    write_run_directory(dir / sweep.runs[i].id, cfg, data, sweep.runs[i], g, c);
  }
  detail::write_json(dir / "config.json", to_json(cfg));
  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["baseline"] = sweep.runs.front().id;
  manifest["start_params_hash"] = parameters_hash(sweep.runs.front().result.initial);
  auto runs = nlohmann::json::array();
  for (const auto& r : sweep.runs) runs.push_back(r.id);
  manifest["runs"] = runs;
  detail::write_json(dir / "manifest.json", manifest);

  auto trace = detail::open_out(dir / "trace.csv");
  report::trace_header(trace);
  auto target = detail::open_out(dir / "target_table.csv");
  report::target_header(target);
  for (const auto& r : sweep.runs) {
    report::trace_rows(trace, r.id, r.result.records);
    report::target_rows(target, r.id, r.table);
  }
  auto gain = detail::open_out(dir / "gain_table.csv");
  report::gain_header(gain);
  auto comp = detail::open_out(dir / "comparison.csv");
  report::comparison_header(comp);
  for (std::size_t i = 1; i < sweep.runs.size(); ++i) {
    report::gain_rows(gain, sweep.runs[i].id, sweep.gains[i - 1]);
    report::comparison_row(comp, sweep.runs[i].id, sweep.comparisons[i - 1]);
  }
}

/// lr_search.csv (one row per grid value, ascending) plus the echoed config.
inline void write_lr_search_directory(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                      const LrSearchResult& result) {
  std::filesystem::create_directories(dir);
  detail::write_json(dir / "config.json", to_json(cfg));
  auto os = detail::open_out(dir / "lr_search.csv");
  report::lr_header(os);
  for (const auto& c : result.candidates)
    report::lr_row(os, c.learning_rate, c.rounds, result.chosen && *result.chosen == c.learning_rate);
}

}  // namespace fedprio

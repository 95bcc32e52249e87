// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedprio/fedprio.hpp"
#include "oracles.hpp"

using namespace fedprio;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome score_worked_examples() {
  Outcome o;
  const std::vector<std::pair<std::vector<double>, double>> cases{
      {{0.9, 0.2, 0.4}, 1.152}, {{0.1, 0.8, 0.5}, 0.22}, {{0.4, 0.2, 0.9}, 0.552}, {{0.5, 0.8, 0.1}, 0.94}};
  for (const auto& [c, expected] : cases) {
    const double got = score_prioritized(c);
    o.require(std::abs(got - expected) <= 1e-12, "f(" + fmt("%g", c[0]) + ",...) = " + fmt("%.15g", got));
  }
  const std::vector<std::vector<double>> tuples{{0.9, 0.2, 0.4}, {0.1, 0.8, 0.5}};
  const auto w = compute_weights(tuples, ScoreKind::mean);
  o.require(std::abs(w.values[0] - 1.5 / 2.9) <= 1e-12, "mean weight for the first client");
  o.require(std::abs(w.values[1] - 1.4 / 2.9) <= 1e-12, "mean weight for the second client");
  if (o.pass) o.detail = "4 prioritized scores and 2 mean weights within 1e-12";
  return o;
}

Outcome algebraic_laws() {
  Outcome o;
  std::mt19937_64 gen(20240101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_m(1, 8);
  std::size_t mono_bad = 0;
  std::size_t anni_bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t m = pick_m(gen);
    std::vector<double> c(m);
    for (auto& v : c) v = u(gen);
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, m - 1)(gen);
    auto raised = c;
    raised[i] = c[i] + (1.0 - c[i]) * u(gen);
    if (score_prioritized(c) > score_prioritized(raised)) ++mono_bad;
  }
  for (int t = 0; t < 10000; ++t) {
    const std::size_t m = pick_m(gen);
    std::vector<double> c(m);
    for (auto& v : c) v = u(gen);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, m - 1)(gen);
    c[j] = 0.0;
    const std::span<const double> prefix(c.data(), j);
    const double expected = j == 0 ? 0.0 : score_prioritized(prefix);
    if (score_prioritized(c) != expected) ++anni_bad;
  }
  o.require(mono_bad == 0, std::to_string(mono_bad) + " monotonicity violations");
  o.require(anni_bad == 0, std::to_string(anni_bad) + " annihilation violations");
  for (std::size_t m = 1; m <= 8; ++m) {
    o.require(score_prioritized(std::vector<double>(m, 0.0)) == 0.0, "f(0) != 0 at m=" + std::to_string(m));
    o.require(score_prioritized(std::vector<double>(m, 1.0)) == static_cast<double>(m),
              "f(1) != m at m=" + std::to_string(m));
  }
  if (o.pass) o.detail = "20000 random tuples, zero violations; boundaries exact for m=1..8";
  return o;
}

std::vector<ClientShard> noniid_gaussian(std::uint64_t seed) {
  SynthParams p;
  p.num_classes = 10;
  p.dim = 20;
  p.samples_per_class = 600;
  const auto data = synth_generate(SynthKind::multiclass_gaussian, p, seed);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::noniid_shards;
  spec.num_clients = 100;
  spec.shards_per_client = 2;
  return partition(data, spec, seed);
}

Outcome fedavg_reduction() {
  Outcome o;
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::size_t> size_dist(1, 5000);
  std::uniform_int_distribution<std::size_t> cohort_dist(1, 40);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = cohort_dist(gen);
    std::vector<std::size_t> n(k);
    std::vector<double> raw(k);
    std::size_t total = 0;
    for (std::size_t a = 0; a < k; ++a) {
      n[a] = size_dist(gen);
      raw[a] = static_cast<double>(n[a]);
      total += n[a];
    }
    CriteriaColumns cols{{CriterionId::DS, normalize_cohort(raw).values}};
    const auto w = compute_weights(cols, CriteriaOrdering({CriterionId::DS}), ScoreKind::prioritized);
    for (std::size_t a = 0; a < k; ++a)
      worst = std::max(worst, std::abs(w.values[a] - static_cast<double>(n[a]) / static_cast<double>(total)));
  }
  o.require(worst <= 1e-12, "DS weight deviates by " + fmt("%.3g", worst));

  const std::uint64_t seed = 5;
  const auto clients = noniid_gaussian(seed);
  const ModelSpec spec{20, 10, 0};
  FederationConfig cfg;
  cfg.trainer.learning_rate = 0.1;
  cfg.trainer.local_epochs = 5;
  cfg.client_fraction = 0.1;
  cfg.max_rounds = 20;
  cfg.keep_parameters = true;
  const auto result = run_experiment(make_federation(spec, clients, seed), cfg);
  const auto reference = oracle::fedavg_trajectory(spec, clients, cfg.trainer, 0.1, 20, seed);
  std::size_t mismatched = 0;
  for (std::size_t r = 0; r < 20; ++r)
    if (!(result.records[r].global_params->values == reference[r].values)) ++mismatched;
  o.require(mismatched == 0, std::to_string(mismatched) + " of 20 rounds differ from the reference FedAvg");
  if (o.pass) o.detail = "1000 cohorts max dev " + fmt("%.2g", worst) + "; 20-round trajectory bit-identical";
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  std::mt19937_64 gen(4242);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t hidden : {std::size_t{0}, std::size_t{6}}) {
    for (int t = 0; t < 100; ++t) {
      const std::size_t d = 2 + gen() % 5;
      const std::size_t k = 2 + gen() % 4;
      const ModelSpec spec{d, k, hidden};
      Parameters p = init_parameters(spec, gen());
      for (auto& v : p.values) v += 0.3 * u(gen);
      std::vector<Sample> batch(1 + gen() % 8);
      for (auto& s : batch) {
        s.features.resize(d);
        for (auto& x : s.features) x = 2.0 * u(gen);
        s.label = gen() % k;
      }
      const auto analytic = loss_and_gradient(p, spec, batch).gradient;
      const auto numeric = oracle::numeric_gradient(p, spec, batch);
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        // relative error with an absolute floor for near-zero coordinates
        const double rel = std::abs(analytic[i] - numeric[i]) / std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
        worst = std::max(worst, rel);
      }
      ++cases;
    }
  }
  o.require(worst < 1e-4, "max relative error " + fmt("%.3g", worst));
  if (o.pass) o.detail = std::to_string(cases) + " cases (logistic + MLP), max relative error " + fmt("%.2g", worst);
  return o;
}

// ---------------------------------------------------------------------------

ExperimentConfig desk_config() {
  return parse_config_json(nlohmann::json::parse(R"({
    "seed": 2024,
    "dataset": {"source": "synthetic_gaussian", "scheme": "noniid_shards", "num_clients": 100,
                "shards_per_client": 2,
                "synthetic": {"num_classes": 10, "dim": 20, "samples_per_class": 600}},
    "trainer": {"learning_rate": 0.1, "local_epochs": 5, "client_fraction": 0.1, "max_rounds": 150},
    "targets": [0.7, 0.8, 0.9],
    "fractions": [0.1, 0.3, 0.5, 0.7, 0.9],
    "sweep": {"criteria": ["DS", "LD", "MW"]}
  })"));
}

struct DeskRun {
  ExperimentConfig cfg;
  PreparedData data;
  SweepResult sweep;
};

// Replays a run round by round and checks each aggregate against the cohort's own local models.
bool convex_bound_holds(const ExperimentConfig& cfg, const PreparedData& data, const CriteriaOrdering& order,
                        std::string& why) {
  auto state = make_federation(data.spec, data.clients, cfg.seed);
  const auto fc = cfg.federation(order);
  for (std::size_t r = 1; r <= cfg.max_rounds; ++r) {
    const auto plan = select_cohort(state, fc.client_fraction, cohort_seed(cfg.seed, r));
    const auto out = run_round(state, plan, fc);
    std::vector<Parameters> locals;
    for (auto id : plan.cohort) {
      const auto& c = *std::find_if(state.clients.begin(), state.clients.end(), [&](const auto& x) { return x.id == id; });
      locals.push_back(*local_train(state.global, state.spec, c, fc.trainer, training_seed(cfg.seed, r, id)));
    }
    for (std::size_t j = 0; j < out.global.size(); ++j) {
      double lo = locals[0].values[j];
      double hi = lo;
      for (const auto& l : locals) {
        lo = std::min(lo, l.values[j]);
        hi = std::max(hi, l.values[j]);
      }
      const double slack = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
      if (out.global.values[j] < lo - slack || out.global.values[j] > hi + slack) {
        why = order.label() + " round " + std::to_string(r) + " coordinate " + std::to_string(j) + " outside hull";
        return false;
      }
    }
    state.global = out.global;
    state.round_index = r;
  }
  return true;
}

Outcome desk_experiment(DeskRun& desk) {
  Outcome o;
  const auto& sweep = desk.sweep;
  const auto& cfg = desk.cfg;

  // (a) weights and convex combination
  for (const auto& run : sweep.runs) {
    for (const auto& rec : run.result.records) {
      double sum = 0.0;
      for (double w : rec.weights) {
        sum += w;
        o.require(w >= 0.0, run.id + " negative weight");
      }
      o.require(std::abs(sum - 1.0) <= 1e-9, run.id + " round " + std::to_string(rec.round) + " weights sum to " +
                                                 fmt("%.17g", sum));
    }
    std::string why;
    o.require(convex_bound_holds(cfg, desk.data, run.ordering, why), why);
  }

  // (b) baseline reaches 0.7 on half the devices
  const auto& base = sweep.runs.front();
  o.require(base.id == "DS", "first run is not the DS baseline");
  const auto base_rounds = rounds_to_target(base.result.records, 0.7, 0.5);
  o.require(base_rounds.has_value(), "DS baseline never reached 0.7 on 50% of devices within 150 rounds");

  // (c) the six permutations and a full gain table
  std::vector<std::string> perms;
  std::vector<CriterionId> ids{CriterionId::DS, CriterionId::LD, CriterionId::MW};
  std::sort(ids.begin(), ids.end());
  do perms.push_back(CriteriaOrdering(ids).label("_"));
  while (std::next_permutation(ids.begin(), ids.end()));
  for (const auto& p : perms) {
    const auto it = std::find_if(sweep.runs.begin(), sweep.runs.end(), [&](const auto& r) { return r.id == p; });
    o.require(it != sweep.runs.end(), "permutation " + p + " missing");
    if (it == sweep.runs.end()) continue;
    o.require(it->result.records.size() == cfg.max_rounds, p + " stopped early");
    const auto idx = static_cast<std::size_t>(it - sweep.runs.begin());
    const auto& g = sweep.gains[idx - 1];
    o.require(g.gains.size() == cfg.targets.size() && g.averages.size() == cfg.targets.size(), p + " gain rows");
    for (const auto& row : g.gains) {
      o.require(row.size() == cfg.fractions.size(), p + " gain columns");
      for (double v : row) o.require(std::isfinite(v), p + " non-finite gain");
    }
  }

  // (d) table cells against a brute-force scan
  std::size_t cells = 0;
  for (const auto& run : sweep.runs)
    for (std::size_t t = 0; t < cfg.targets.size(); ++t)
      for (std::size_t f = 0; f < cfg.fractions.size(); ++f) {
        const auto expected = oracle::scan_rounds(run.result.records, cfg.targets[t], cfg.fractions[f]);
        o.require(run.table.cells[t][f] == expected, run.id + " cell mismatch");
        ++cells;
      }

  if (o.pass)
    o.detail = "9 runs x 150 rounds; DS reaches 0.7@50% at round " + std::to_string(*base_rounds) + "; " +
               std::to_string(cells) + " cells match the scan";
  return o;
}

Outcome determinism(const DeskRun& first) {
  Outcome o;
  const auto root = fs::temp_directory_path() / "fedprio_acceptance_determinism";
  fs::remove_all(root);
  write_sweep_directory(root / "a", first.cfg, first.data, first.sweep);
  const auto cfg = desk_config();
  const auto data = prepare_data(cfg);
  write_sweep_directory(root / "b", cfg, data, run_sweep(cfg, data));
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    o.require(fs::exists(root / "b" / rel) && slurp(entry.path()) == slurp(root / "b" / rel), rel.string() + " differs");
    ++compared;
  }
  o.require(compared > 0, "no CSV files written");
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(compared) + " CSV files byte-identical";
  return o;
}

Outcome metrics_oracles(const DeskRun& desk) {
  Outcome o;
  std::mt19937_64 gen(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t devices = 1 + gen() % 40;
    std::vector<double> acc(devices);
    std::vector<std::size_t> sizes(devices);
    std::size_t correct = 0;
    std::size_t total = 0;
    for (std::size_t a = 0; a < devices; ++a) {
      sizes[a] = 1 + gen() % 200;
      const std::size_t c = gen() % (sizes[a] + 1);
      acc[a] = static_cast<double>(c) / static_cast<double>(sizes[a]);
      correct += c;
      total += sizes[a];
    }
    const double pooled = static_cast<double>(correct) / static_cast<double>(total);
    o.require(*global_accuracy(acc, sizes) == pooled, "global accuracy differs from pooled ratio");
  }
  const auto labels = pooled_labels(desk.data);
  for (const auto& m : desk.sweep.comparisons)
    o.require(m.total() == labels.size(), "comparison cells do not sum to the pooled test size");
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + gen() % 500;
    std::vector<std::size_t> y(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = gen() % 3;
      b[i] = gen() % 3;
      c[i] = gen() % 3;
    }
    o.require(comparison_matrix(b, c, y).total() == n, "random comparison matrix total");
  }
  for (const auto& run : desk.sweep.runs) {
    const auto g = gain_table(run.table, run.table, desk.cfg.max_rounds);
    for (const auto& row : g.gains)
      for (double v : row) o.require(v == 0.0, "gain_table(X,X) has a nonzero cell for " + run.id);
    for (double v : g.averages) o.require(v == 0.0, "gain_table(X,X) has a nonzero average for " + run.id);
  }
  if (o.pass) o.detail = "100 pooled-accuracy instances exact; comparison totals and self-gains hold";
  return o;
}

Outcome class_balance_direction() {
  Outcome o;
  const std::size_t max_rounds = 100;
  double ds_sum = 0.0;
  double cb_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto j = nlohmann::json::parse(R"({
      "dataset": {"source": "synthetic_binary_user", "scheme": "user_keyed", "min_user_samples": 5,
                  "synthetic": {"dim": 20, "num_users": 100, "separation": 2.0}},
      "trainer": {"learning_rate": 0.1, "local_epochs": 5, "client_fraction": 0.1, "max_rounds": 100},
      "targets": [0.7], "fractions": [0.5]
    })");
    j["seed"] = seed;
    const auto cfg = parse_config_json(j);
    const auto data = prepare_data(cfg);
    const auto ds = run_single(cfg, data, CriteriaOrdering({CriterionId::DS}));
    const auto cb = run_single(cfg, data, CriteriaOrdering({CriterionId::CB}));
    const auto rd = rounds_to_target(ds.result.records, 0.7, 0.5).value_or(max_rounds);
    const auto rc = rounds_to_target(cb.result.records, 0.7, 0.5).value_or(max_rounds);
    ds_sum += static_cast<double>(rd);
    cb_sum += static_cast<double>(rc);
    per_seed += (per_seed.empty() ? "" : " ") + std::to_string(rd) + "/" + std::to_string(rc);
  }
  const double ds_mean = ds_sum / 5.0;
  const double cb_mean = cb_sum / 5.0;
  o.require(cb_mean <= ds_mean, "CB mean " + fmt("%.1f", cb_mean) + " > DS mean " + fmt("%.1f", ds_mean));
  o.detail = "mean rounds DS " + fmt("%.1f", ds_mean) + " vs CB " + fmt("%.1f", cb_mean) + " (DS/CB per seed: " +
             per_seed + ")" + (o.pass ? "" : "; " + o.detail);
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail << " ("
              << fmt("%.1f", secs) << "s)" << std::endl;
    if (!o.pass) ++failures;
  };

  report(1, "score function worked examples", score_worked_examples);
  report(2, "monotonicity and annihilation laws", algebraic_laws);
  report(3, "DS-only weighting reduces to FedAvg", fedavg_reduction);
  report(4, "analytic gradients match finite differences", gradient_checks);

  DeskRun desk;
  bool desk_ready = false;
  report(5, "desk-scale non-IID sweep", [&] {
    desk.cfg = desk_config();
    desk.data = prepare_data(desk.cfg);
    desk.sweep = run_sweep(desk.cfg, desk.data);
    desk_ready = true;
    return desk_experiment(desk);
  });
  auto needs_desk = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!desk_ready) return {false, "desk-scale sweep did not complete"};
      return fn(desk);
    };
  };
  report(6, "sweep output is byte-identical across executions", needs_desk(determinism));
  report(7, "metrics oracles", needs_desk(metrics_oracles));
  report(8, "CB-first reaches the target no later than DS", class_balance_direction);

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}

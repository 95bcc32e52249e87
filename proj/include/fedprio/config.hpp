// Experiment configuration: a single JSON document, validated with field paths in errors.
//
// {
//   "seed": 42,
//   "dataset": {"source": "synthetic_gaussian", "scheme": "noniid_shards", "num_clients": 100, ...},
//   "model": {"hidden_units": 0},
//   "trainer": {"learning_rate": 0.1, "local_epochs": 5, "batch_size": "full",
//               "client_fraction": 0.1, "max_rounds": 1000},
//   "criteria": ["DS"], "score_fn": "prioritized",
//   "targets": [0.7, 0.8, 0.9, 0.95], "fractions": [0.1, ..., 0.9],
//   "sweep": {"criteria": ["DS", "LD", "MW"]},
//   "lr_search": {"grid": [0.01, 0.05, 0.1]}
// }
//
// See README.md for every key and its default.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedprio/criteria.hpp"
#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/federation.hpp"
#include "fedprio/learner.hpp"
#include "fedprio/scoring.hpp"

namespace fedprio {

enum class DataSource { synthetic_gaussian, synthetic_binary_user, idx, jsonl };

struct DatasetConfig {
  DataSource source = DataSource::synthetic_gaussian;
  PartitionSpec partition;
  SynthParams synth;
  std::string images;  // idx
  std::string labels;  // idx
  std::string path;    // jsonl
};

struct SweepSpec {
  std::vector<CriterionId> criteria;       // permuted set
  CriteriaOrdering baseline{{CriterionId::DS}};
  bool singles = true;                     // one run per criterion of `criteria`
  bool permutations = true;                // every ordering of `criteria`
  std::vector<CriteriaOrdering> orderings; // extra explicit runs
};

struct LrSearchSpec {
  std::vector<double> grid;
  std::optional<double> target;  // defaults to the first entry of `targets`
  double fraction = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::size_t hidden_units = 0;
  TrainerConfig trainer;
  double client_fraction = 0.1;
  std::size_t max_rounds = 1000;
  AggregationMode aggregation = AggregationMode::model_average;
  bool early_stop = false;
  std::size_t threads = 1;
  CriteriaOrdering ordering{{CriterionId::DS}};
  ScoreKind score_kind = ScoreKind::prioritized;
  std::vector<double> targets{0.7, 0.8, 0.9, 0.95};
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::string output_dir;
  std::optional<SweepSpec> sweep;
  std::optional<LrSearchSpec> lr_search;

  [[nodiscard]] FederationConfig federation(const CriteriaOrdering& order) const {
    FederationConfig f;
    f.trainer = trainer;
    f.client_fraction = client_fraction;
    f.max_rounds = max_rounds;
    f.ordering = order;
    f.score_kind = score_kind;
    f.aggregation = aggregation;
    f.early_stop = early_stop;
    f.targets = targets;
    f.fractions = fractions;
    f.threads = threads;
    return f;
  }
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  ConfigReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where() + ": " + msg); }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(child(key) + ": " + msg);
  }

  [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[nodiscard]] bool has(const std::string& key) const {
    seen_.insert(key);
    return node_.contains(key);
  }
  [[nodiscard]] const json& at(const std::string& key) const {
    seen_.insert(key);
    return node_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return at(key).get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  double get_real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_number()) fail(key, "must be a number");
    return at(key).get<double>();
  }

  std::size_t get_count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(key, "must be a nonnegative integer");
    return v.get<std::size_t>();
  }

  std::string get_string(const std::string& key, std::string fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_string()) fail(key, "must be a string");
    return at(key).get<std::string>();
  }

  std::vector<double> get_reals(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  /// Rejects keys nobody asked for (typos would otherwise be silently ignored).
  void reject_unknown() const {
    for (const auto& [key, _] : node_.items())
      if (!seen_.count(key)) fail(key, "unknown key");
  }

  [[nodiscard]] std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& node_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

inline std::vector<CriterionId> parse_criteria_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": must be an array of criterion names");
  std::vector<CriterionId> ids;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string where = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_string()) throw ConfigError(where + ": must be a criterion name");
    const auto name = v[i].get<std::string>();
    const auto id = parse_criterion(name);
    if (!id) throw ConfigError(where + ": unknown criterion '" + name + "' (expected DS, LD, MW, CB or IS)");
    ids.push_back(*id);
  }
  return ids;
}

inline CriteriaOrdering parse_ordering(const json& v, const std::string& path) {
  try {
    return CriteriaOrdering(parse_criteria_list(v, path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

inline void check_grid(const std::vector<double>& v, const std::string& path, bool allow_zero_lo) {
  if (v.empty()) throw ConfigError(path + ": must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool lo_ok = allow_zero_lo ? v[i] >= 0.0 : v[i] > 0.0;
    if (!(lo_ok && v[i] <= 1.0)) throw ConfigError(path + "[" + std::to_string(i) + "]: must lie in (0,1]");
    if (i > 0 && !(v[i] > v[i - 1])) throw ConfigError(path + ": must be strictly increasing");
  }
}

inline DataSource parse_source(const ConfigReader& r) {
  if (!r.has("source")) r.fail("source", "is required");
  const auto s = r.get_string("source", "");
  if (s == "synthetic_gaussian") return DataSource::synthetic_gaussian;
  if (s == "synthetic_binary_user") return DataSource::synthetic_binary_user;
  if (s == "idx") return DataSource::idx;
  if (s == "jsonl") return DataSource::jsonl;
  r.fail("source", "unknown source '" + s + "'");
}

inline SynthParams parse_synth(const json& node, const std::string& path) {
  ConfigReader r(node, path);
  SynthParams p;
  p.num_classes = r.get_count("num_classes", p.num_classes);
  p.dim = r.get_count("dim", p.dim);
  p.samples_per_class = r.get_count("samples_per_class", p.samples_per_class);
  p.separation = r.get_real("separation", p.separation);
  p.noise = r.get_real("noise", p.noise);
  p.blur_noise = r.get_real("blur_noise", p.blur_noise);
  p.sharp_prob = r.get_real("sharp_prob", p.sharp_prob);
  p.num_users = r.get_count("num_users", p.num_users);
  p.min_user_samples = r.get_count("min_user_samples", p.min_user_samples);
  p.max_user_samples = r.get_count("max_user_samples", p.max_user_samples);
  p.skewed_user_share = r.get_real("skewed_user_share", p.skewed_user_share);
  p.skew_minority_max = r.get_real("skew_minority_max", p.skew_minority_max);
  p.skew_positive_bias = r.get_real("skew_positive_bias", p.skew_positive_bias);
  p.skewed_size_factor = r.get_real("skewed_size_factor", p.skewed_size_factor);
  p.sharp_prob_min = r.get_real("sharp_prob_min", p.sharp_prob_min);
  p.sharp_prob_max = r.get_real("sharp_prob_max", p.sharp_prob_max);
  r.reject_unknown();
  if (p.dim == 0) r.fail("dim", "must be positive");
  if (p.num_classes < 2) r.fail("num_classes", "must be at least 2");
  return p;
}

inline DatasetConfig parse_dataset(const json& node, const std::filesystem::path& base_dir) {
  ConfigReader r(node, "dataset");
  DatasetConfig d;
  d.source = parse_source(r);
  const bool keyed = d.source == DataSource::synthetic_binary_user || d.source == DataSource::jsonl;
  const auto scheme = r.get_string("scheme", keyed ? "user_keyed" : "iid");
  if (scheme == "iid") {
    d.partition.scheme = PartitionScheme::iid;
  } else if (scheme == "noniid_shards") {
    d.partition.scheme = PartitionScheme::noniid_shards;
  } else if (scheme == "user_keyed") {
    d.partition.scheme = PartitionScheme::user_keyed;
  } else {
    r.fail("scheme", "unknown scheme '" + scheme + "'");
  }
  d.partition.num_clients = r.get_count("num_clients", 100);
  d.partition.shards_per_client = r.get_count("shards_per_client", 2);
  d.partition.holdout_ratio = r.get_real("holdout_ratio", 0.2);
  d.partition.min_user_samples = r.get_count("min_user_samples", 5);
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (base_dir / fp).lexically_normal().string();
  };
  d.images = resolve(r.get_string("images", ""));
  d.labels = resolve(r.get_string("labels", ""));
  d.path = resolve(r.get_string("path", ""));
  if (r.has("synthetic")) d.synth = parse_synth(r.at("synthetic"), "dataset.synthetic");
  r.reject_unknown();

  if (d.partition.scheme != PartitionScheme::user_keyed && d.partition.num_clients < 2)
    r.fail("num_clients", "must be at least 2");
  if (d.partition.scheme == PartitionScheme::noniid_shards && d.partition.shards_per_client == 0)
    r.fail("shards_per_client", "must be at least 1");
  if (!(d.partition.holdout_ratio > 0.0 && d.partition.holdout_ratio < 1.0)) r.fail("holdout_ratio", "must lie in (0,1)");
  if (d.source == DataSource::idx && (d.images.empty() || d.labels.empty()))
    r.fail("images/labels paths are required for source \"idx\"");
  if (d.source == DataSource::jsonl && d.path.empty()) r.fail("path", "is required for source \"jsonl\"");
  if (d.source == DataSource::synthetic_binary_user && d.partition.scheme != PartitionScheme::user_keyed)
    r.fail("scheme", "synthetic_binary_user data is partitioned by user (use \"user_keyed\")");
  if (d.source == DataSource::idx && d.partition.scheme == PartitionScheme::user_keyed)
    r.fail("scheme", "IDX data carries no user keys");
  return d;
}

/// Criteria that the dataset cannot support, checked before any data is loaded.
inline void check_applicable(const CriteriaOrdering& order, const DatasetConfig& d, const std::string& path) {
  for (auto id : order.ids()) {
    if (id == CriterionId::CB) {
      const bool binary = d.source == DataSource::synthetic_binary_user ||
                          (d.source == DataSource::synthetic_gaussian && d.synth.num_classes == 2) ||
                          d.source == DataSource::jsonl;  // re-checked after loading
      if (!binary) throw ConfigError(path + ": CB requires a binary task");
    }
    if (id == CriterionId::IS && d.source == DataSource::idx)
      throw ConfigError(path + ": IS requires sharpness metadata, which IDX data does not carry");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config_json(const nlohmann::json& root,
                                          const std::filesystem::path& base_dir = std::filesystem::current_path()) {
  detail::ConfigReader r(root, "");
  ExperimentConfig c;
  if (!r.has("seed")) r.fail("seed", "is required");
  {
    const auto& s = r.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      r.fail("seed", "must be a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (!r.has("dataset")) r.fail("dataset", "is required");
  c.dataset = detail::parse_dataset(r.at("dataset"), base_dir);

  if (r.has("model")) {
    detail::ConfigReader m(r.at("model"), "model");
    c.hidden_units = m.get_count("hidden_units", 0);
    const auto act = m.get_string("activation", "relu");
    if (act != "relu") m.fail("activation", "only \"relu\" is supported");
    m.reject_unknown();
  }

  if (r.has("trainer")) {
    detail::ConfigReader t(r.at("trainer"), "trainer");
    c.trainer.learning_rate = t.get_real("learning_rate", c.trainer.learning_rate);
    c.trainer.local_epochs = t.get_count("local_epochs", c.trainer.local_epochs);
    if (t.has("batch_size")) {
      const auto& b = t.at("batch_size");
      if (b.is_string() && b.get<std::string>() == "full") {
        c.trainer.batch_size.reset();
      } else if (b.is_number_integer() && b.get<long long>() > 0) {
        c.trainer.batch_size = b.get<std::size_t>();
      } else {
        t.fail("batch_size", "must be a positive integer or \"full\"");
      }
    }
    c.client_fraction = t.get_real("client_fraction", c.client_fraction);
    c.max_rounds = t.get_count("max_rounds", c.max_rounds);
    const auto agg = t.get_string("aggregation", "model_average");
    if (agg == "model_average") {
      c.aggregation = AggregationMode::model_average;
    } else if (agg == "gradient") {
      c.aggregation = AggregationMode::gradient;
    } else {
      t.fail("aggregation", "must be \"model_average\" or \"gradient\"");
    }
    c.early_stop = t.get<bool>("early_stop", false);
    c.threads = t.get_count("threads", 1);
    t.reject_unknown();
    if (!(c.trainer.learning_rate > 0.0) || !std::isfinite(c.trainer.learning_rate))
      t.fail("learning_rate", "must be positive");
    if (c.trainer.local_epochs < 1) t.fail("local_epochs", "must be at least 1");
    if (!(c.client_fraction > 0.0 && c.client_fraction <= 1.0)) t.fail("client_fraction", "must lie in (0,1]");
  }

  if (r.has("criteria")) c.ordering = detail::parse_ordering(r.at("criteria"), "criteria");
  {
    const auto fn = r.get_string("score_fn", "prioritized");
    if (fn == "prioritized") {
      c.score_kind = ScoreKind::prioritized;
    } else if (fn == "mean") {
      c.score_kind = ScoreKind::mean;
    } else {
      r.fail("score_fn", "must be \"prioritized\" or \"mean\"");
    }
  }
  c.targets = r.get_reals("targets", c.targets);
  c.fractions = r.get_reals("fractions", c.fractions);
  detail::check_grid(c.targets, "targets", true);
  detail::check_grid(c.fractions, "fractions", false);
  c.output_dir = r.get_string("output_dir", "");
  detail::check_applicable(c.ordering, c.dataset, "criteria");

  if (r.has("sweep")) {
    detail::ConfigReader s(r.at("sweep"), "sweep");
    SweepSpec sw;
    if (s.has("criteria")) {
      const auto set = detail::parse_ordering(s.at("criteria"), "sweep.criteria");
      sw.criteria.assign(set.ids().begin(), set.ids().end());
    }
    if (s.has("baseline")) sw.baseline = detail::parse_ordering(s.at("baseline"), "sweep.baseline");
    sw.singles = s.get<bool>("singles", true);
    sw.permutations = s.get<bool>("permutations", true);
    if (s.has("orderings")) {
      const auto& list = s.at("orderings");
      if (!list.is_array()) s.fail("orderings", "must be an array of criteria lists");
      for (std::size_t i = 0; i < list.size(); ++i)
        sw.orderings.push_back(detail::parse_ordering(list[i], "sweep.orderings[" + std::to_string(i) + "]"));
    }
    s.reject_unknown();
    detail::check_applicable(sw.baseline, c.dataset, "sweep.baseline");
    if (!sw.criteria.empty())
      detail::check_applicable(CriteriaOrdering(sw.criteria), c.dataset, "sweep.criteria");
    for (std::size_t i = 0; i < sw.orderings.size(); ++i)
      detail::check_applicable(sw.orderings[i], c.dataset, "sweep.orderings[" + std::to_string(i) + "]");
    c.sweep = std::move(sw);
  }

  if (r.has("lr_search")) {
    detail::ConfigReader l(r.at("lr_search"), "lr_search");
    LrSearchSpec ls;
    ls.grid = l.get_reals("grid", {});
    if (l.has("target")) ls.target = l.get_real("target", 0.0);
    ls.fraction = l.get_real("fraction", 0.5);
    l.reject_unknown();
    for (std::size_t i = 0; i < ls.grid.size(); ++i)
      if (!(ls.grid[i] > 0.0)) l.fail("grid[" + std::to_string(i) + "] must be positive");
    if (!(ls.fraction > 0.0 && ls.fraction <= 1.0)) l.fail("fraction", "must lie in (0,1]");
    c.lr_search = std::move(ls);
  }
  r.reject_unknown();
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config_json(root, std::filesystem::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Echo of the effective configuration (every default filled in).

inline std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic_gaussian: return "synthetic_gaussian";
    case DataSource::synthetic_binary_user: return "synthetic_binary_user";
    case DataSource::idx: return "idx";
    case DataSource::jsonl: return "jsonl";
  }
  return "?";
}

inline std::string to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::iid: return "iid";
    case PartitionScheme::noniid_shards: return "noniid_shards";
    case PartitionScheme::user_keyed: return "user_keyed";
  }
  return "?";
}

inline nlohmann::json ordering_json(const CriteriaOrdering& o) {
  auto arr = nlohmann::json::array();
  for (auto id : o.ids()) arr.push_back(std::string(to_string(id)));
  return arr;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  auto& d = j["dataset"];
  d["source"] = to_string(c.dataset.source);
  d["scheme"] = to_string(c.dataset.partition.scheme);
  d["num_clients"] = c.dataset.partition.num_clients;
  d["shards_per_client"] = c.dataset.partition.shards_per_client;
  d["holdout_ratio"] = c.dataset.partition.holdout_ratio;
  d["min_user_samples"] = c.dataset.partition.min_user_samples;
  if (!c.dataset.images.empty()) d["images"] = c.dataset.images;
  if (!c.dataset.labels.empty()) d["labels"] = c.dataset.labels;
  if (!c.dataset.path.empty()) d["path"] = c.dataset.path;
  if (c.dataset.source == DataSource::synthetic_gaussian || c.dataset.source == DataSource::synthetic_binary_user) {
    const auto& p = c.dataset.synth;
    d["synthetic"] = {{"num_classes", p.num_classes},
                      {"dim", p.dim},
                      {"samples_per_class", p.samples_per_class},
                      {"separation", p.separation},
                      {"noise", p.noise},
                      {"blur_noise", p.blur_noise},
                      {"sharp_prob", p.sharp_prob},
                      {"num_users", p.num_users},
                      {"min_user_samples", p.min_user_samples},
                      {"max_user_samples", p.max_user_samples},
                      {"skewed_user_share", p.skewed_user_share},
                      {"skew_minority_max", p.skew_minority_max},
                      {"skew_positive_bias", p.skew_positive_bias},
                      {"skewed_size_factor", p.skewed_size_factor},
                      {"sharp_prob_min", p.sharp_prob_min},
                      {"sharp_prob_max", p.sharp_prob_max}};
  }
  j["model"] = {{"hidden_units", c.hidden_units}, {"activation", "relu"}};
  auto& t = j["trainer"];
  t["learning_rate"] = c.trainer.learning_rate;
  t["local_epochs"] = c.trainer.local_epochs;
  if (c.trainer.batch_size) {
    t["batch_size"] = *c.trainer.batch_size;
  } else {
    t["batch_size"] = "full";
  }
  t["client_fraction"] = c.client_fraction;
  t["max_rounds"] = c.max_rounds;
  t["aggregation"] = c.aggregation == AggregationMode::model_average ? "model_average" : "gradient";
  t["early_stop"] = c.early_stop;
  t["threads"] = c.threads;
  j["criteria"] = ordering_json(c.ordering);
  j["score_fn"] = std::string(to_string(c.score_kind));
  j["targets"] = c.targets;
  j["fractions"] = c.fractions;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  if (c.sweep) {
    auto& s = j["sweep"];
    auto crit = nlohmann::json::array();
    for (auto id : c.sweep->criteria) crit.push_back(std::string(to_string(id)));
    s["criteria"] = crit;
    s["baseline"] = ordering_json(c.sweep->baseline);
    s["singles"] = c.sweep->singles;
    s["permutations"] = c.sweep->permutations;
    auto ords = nlohmann::json::array();
    for (const auto& o : c.sweep->orderings) ords.push_back(ordering_json(o));
    s["orderings"] = ords;
  }
  if (c.lr_search) {
    auto& l = j["lr_search"];
    l["grid"] = c.lr_search->grid;
    if (c.lr_search->target) l["target"] = *c.lr_search->target;
    l["fraction"] = c.lr_search->fraction;
  }
  return j;
}

}  // namespace fedprio

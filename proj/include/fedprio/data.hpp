// Datasets, federated partitioning and synthetic generators.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedprio/error.hpp"
#include "fedprio/rng.hpp"

namespace fedprio {

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;
  bool sharp = true;
  std::string user;  // empty unless the dataset is user-keyed

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// One client's private data. `train.size()` is the client's n_a.
struct ClientShard {
  std::size_t id = 0;
  std::string user_key;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

enum class PartitionScheme { iid, noniid_shards, user_keyed };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::iid;
  std::size_t num_clients = 100;
  std::size_t shards_per_client = 2;
  double holdout_ratio = 0.2;
  std::size_t min_user_samples = 5;  // user_keyed only
};

/// Number of classes implied by the labels (max label + 1).
inline std::size_t count_classes(std::span<const Sample> data) {
  std::size_t k = 0;
  for (const auto& s : data) k = std::max(k, s.label + 1);
  return k;
}

// ---------------------------------------------------------------------------
// IDX ingestion

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open IDX file '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24U) | (std::uint32_t{bytes[offset + 1]} << 16U) |
         (std::uint32_t{bytes[offset + 2]} << 8U) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label file pair (MNIST layout). Pixels are scaled to [0,1].
inline std::vector<Sample> load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = detail::read_file_bytes(images_path);
  const auto labels = detail::read_file_bytes(labels_path);
  if (images.size() < 16) throw FormatError("IDX images file '" + images_path + "' is truncated");
  if (labels.size() < 8) throw FormatError("IDX labels file '" + labels_path + "' is truncated");
  if (detail::read_be32(images, 0) != kIdxImagesMagic)
    throw FormatError("IDX images file '" + images_path + "' has wrong magic number");
  if (detail::read_be32(labels, 0) != kIdxLabelsMagic)
    throw FormatError("IDX labels file '" + labels_path + "' has wrong magic number");

  const std::size_t count = detail::read_be32(images, 4);
  const std::size_t rows = detail::read_be32(images, 8);
  const std::size_t cols = detail::read_be32(images, 12);
  const std::size_t label_count = detail::read_be32(labels, 4);
  if (count != label_count)
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + count * pixels) throw FormatError("IDX images file '" + images_path + "' is truncated");
  if (labels.size() < 8 + count) throw FormatError("IDX labels file '" + labels_path + "' is truncated");

  std::vector<Sample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& s = out[i];
    s.features.resize(pixels);
    const unsigned char* px = images.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) s.features[p] = static_cast<double>(px[p]) / 255.0;
    s.label = labels[8 + i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines

inline void write_jsonl(std::ostream& os, std::span<const Sample> data) {
  for (const auto& s : data) {
    nlohmann::json j;
    j["features"] = s.features;
    j["label"] = s.label;
    j["sharp"] = s.sharp;
    if (!s.user.empty()) j["user"] = s.user;
    os << j.dump() << '\n';
  }
}

inline std::vector<Sample> read_jsonl(std::istream& is) {
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Sample s;
      s.features = j.at("features").get<std::vector<double>>();
      s.label = j.at("label").get<std::size_t>();
      s.sharp = j.value("sharp", true);
      s.user = j.value("user", std::string{});
      if (!out.empty() && s.features.size() != out.front().features.size())
        throw FormatError("feature length differs from first sample");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("JSON lines, line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("JSON lines, line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Sample> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open JSON lines file '" + path + "'");
  return read_jsonl(in);
}

// ---------------------------------------------------------------------------
// Partitioning

namespace detail {

inline void check_holdout(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("holdout_ratio must lie in (0,1)");
}

/// Shuffles `samples` and moves round(ratio * n) of them to the test split, keeping at least one
/// training sample.
inline ClientShard make_shard(std::size_t id, std::string user_key, std::vector<Sample> samples,
                              double ratio, std::uint64_t seed) {
  Rng rng(derive_seed(seed, seed_tags::kHoldout, id));
  rng.shuffle(std::span<Sample>(samples));
  const std::size_t n = samples.size();
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  if (n > 0 && n_test >= n) n_test = n - 1;
  ClientShard shard;
  shard.id = id;
  shard.user_key = std::move(user_key);
  const auto split = samples.begin() + static_cast<std::ptrdiff_t>(n - n_test);
  shard.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(split));
  shard.test.assign(std::make_move_iterator(split), std::make_move_iterator(samples.end()));
  return shard;
}

}  // namespace detail

/// Random equal-size split: shard sizes differ by at most one.
inline std::vector<ClientShard> partition_iid(std::span<const Sample> data, const PartitionSpec& spec,
                                              std::uint64_t seed) {
  detail::check_holdout(spec.holdout_ratio);
  if (spec.num_clients < 2) throw ConfigError("num_clients must be at least 2");
  if (data.size() < spec.num_clients)
    throw ConfigError("iid partition needs at least one sample per client (" + std::to_string(data.size()) +
                      " samples, " + std::to_string(spec.num_clients) + " clients)");
  Rng rng(derive_seed(seed, seed_tags::kPartition, 0));
  const auto order = rng.permutation(data.size());
  const std::size_t base = data.size() / spec.num_clients;
  const std::size_t extra = data.size() % spec.num_clients;

  std::vector<ClientShard> shards;
  shards.reserve(spec.num_clients);
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < spec.num_clients; ++c) {
    const std::size_t size = base + (c < extra ? 1 : 0);
    std::vector<Sample> mine;
    mine.reserve(size);
    for (std::size_t k = 0; k < size; ++k) mine.push_back(data[order[cursor++]]);
    shards.push_back(detail::make_shard(c, {}, std::move(mine), spec.holdout_ratio, seed));
  }
  return shards;
}

/// Label-sorted shard dealing: sort by label, cut into num_clients * shards_per_client equal
/// contiguous shards (remainder dropped), deal shards_per_client random shards to every client.
inline std::vector<ClientShard> partition_noniid_shards(std::span<const Sample> data, const PartitionSpec& spec,
                                                        std::uint64_t seed) {
  detail::check_holdout(spec.holdout_ratio);
  if (spec.num_clients < 2) throw ConfigError("num_clients must be at least 2");
  if (spec.shards_per_client == 0) throw ConfigError("shards_per_client must be at least 1");
  const std::size_t total_shards = spec.num_clients * spec.shards_per_client;
  const std::size_t shard_size = data.size() / total_shards;
  if (shard_size == 0)
    throw ConfigError("cannot cut " + std::to_string(total_shards) + " shards from " +
                      std::to_string(data.size()) + " samples");

  std::vector<std::size_t> by_label(data.size());
  for (std::size_t i = 0; i < by_label.size(); ++i) by_label[i] = i;
  std::stable_sort(by_label.begin(), by_label.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].label < data[b].label; });

  Rng rng(derive_seed(seed, seed_tags::kPartition, 1));
  const auto deal = rng.permutation(total_shards);

  std::vector<ClientShard> shards;
  shards.reserve(spec.num_clients);
  for (std::size_t c = 0; c < spec.num_clients; ++c) {
    std::vector<Sample> mine;
    mine.reserve(shard_size * spec.shards_per_client);
    for (std::size_t k = 0; k < spec.shards_per_client; ++k) {
      const std::size_t shard = deal[c * spec.shards_per_client + k];
      for (std::size_t i = 0; i < shard_size; ++i) mine.push_back(data[by_label[shard * shard_size + i]]);
    }
    shards.push_back(detail::make_shard(c, {}, std::move(mine), spec.holdout_ratio, seed));
  }
  return shards;
}

/// One shard per user key; users below `min_user_samples` are dropped. Client ids follow the
/// lexicographic order of the surviving keys.
inline std::vector<ClientShard> partition_user_keyed(std::span<const Sample> data, const PartitionSpec& spec,
                                                     std::uint64_t seed) {
  detail::check_holdout(spec.holdout_ratio);
  std::map<std::string, std::vector<Sample>> by_user;
  for (const auto& s : data) {
    if (s.user.empty()) throw ConfigError("user_keyed partition requires every sample to carry a user key");
    by_user[s.user].push_back(s);
  }
  std::vector<ClientShard> shards;
  for (auto& [key, samples] : by_user) {
    if (samples.size() < spec.min_user_samples) continue;
    const std::size_t id = shards.size();
    shards.push_back(detail::make_shard(id, key, std::move(samples), spec.holdout_ratio, seed));
  }
  if (shards.empty()) throw ConfigError("user_keyed partition: no user has enough samples");
  return shards;
}

inline std::vector<ClientShard> partition(std::span<const Sample> data, const PartitionSpec& spec,
                                          std::uint64_t seed) {
  switch (spec.scheme) {
    case PartitionScheme::iid: return partition_iid(data, spec, seed);
    case PartitionScheme::noniid_shards: return partition_noniid_shards(data, spec, seed);
    case PartitionScheme::user_keyed: return partition_user_keyed(data, spec, seed);
  }
  throw InternalError("unknown partition scheme");
}

// ---------------------------------------------------------------------------
// Synthetic generators

enum class SynthKind { multiclass_gaussian, binary_user };

/// Parameters for both generator kinds. Fields not used by a kind are ignored.
struct SynthParams {
  std::size_t num_classes = 10;
  std::size_t dim = 20;
  std::size_t samples_per_class = 600;  // multiclass_gaussian
  double separation = 6.0;              // distance between class centers is about separation / sqrt(2)
  double noise = 1.0;                   // per-coordinate std of sharp samples
  double blur_noise = 2.0;              // std multiplier applied to non-sharp samples
  double sharp_prob = 1.0;              // multiclass_gaussian: P(sharp)

  // binary_user
  std::size_t num_users = 100;
  std::size_t min_user_samples = 40;
  std::size_t max_user_samples = 80;
  double skewed_user_share = 0.1;       // fraction of users with a planted class imbalance
  double skew_minority_max = 0.02;      // skewed users: minority share drawn from [0, this]
  double skew_positive_bias = 1.0;      // skewed users: P(majority class is positive)
  double skewed_size_factor = 10.0;     // skewed users hold this many times more samples
  double sharp_prob_min = 0.5;          // per-user P(sharp) drawn from [min, max]
  double sharp_prob_max = 1.0;
};

namespace detail {

inline std::vector<std::vector<double>> class_centers(Rng& rng, std::size_t classes, std::size_t dim,
                                                      double separation) {
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    double norm = 0.0;
    for (auto& v : c) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : c) v *= separation / (2.0 * norm);
  }
  return centers;
}

inline Sample draw_sample(Rng& rng, const std::vector<double>& center, std::size_t label, bool sharp,
                          const SynthParams& p) {
  Sample s;
  s.label = label;
  s.sharp = sharp;
  s.features.resize(center.size());
  const double sigma = sharp ? p.noise : p.noise * p.blur_noise;
  for (std::size_t d = 0; d < center.size(); ++d) s.features[d] = center[d] + sigma * rng.normal();
  return s;
}

inline std::string user_key(std::size_t u) {
  std::string digits = std::to_string(u);
  return "user" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

}  // namespace detail

/// Gaussian clusters around random class centers. `binary_user` additionally assigns user keys,
/// per-user class ratios and per-user sharpness probabilities; non-sharp samples are noisier.
inline std::vector<Sample> synth_generate(SynthKind kind, const SynthParams& p, std::uint64_t seed) {
  if (p.dim == 0) throw ConfigError("synthetic dim must be positive");
  if (!(p.noise >= 0.0) || !(p.blur_noise >= 0.0)) throw ConfigError("synthetic noise must be nonnegative");
  Rng rng(derive_seed(seed, seed_tags::kSynth, static_cast<std::uint64_t>(kind)));

  if (kind == SynthKind::multiclass_gaussian) {
    if (p.num_classes < 2) throw ConfigError("synthetic num_classes must be at least 2");
    if (p.samples_per_class == 0) throw ConfigError("synthetic samples_per_class must be positive");
    if (!(p.sharp_prob >= 0.0 && p.sharp_prob <= 1.0)) throw ConfigError("sharp_prob must lie in [0,1]");
    const auto centers = detail::class_centers(rng, p.num_classes, p.dim, p.separation);
    std::vector<Sample> out;
    out.reserve(p.num_classes * p.samples_per_class);
    for (std::size_t k = 0; k < p.num_classes; ++k)
      for (std::size_t i = 0; i < p.samples_per_class; ++i)
        out.push_back(detail::draw_sample(rng, centers[k], k, rng.bernoulli(p.sharp_prob), p));
    return out;
  }

  if (p.num_users == 0) throw ConfigError("synthetic num_users must be positive");
  if (p.min_user_samples == 0 || p.max_user_samples < p.min_user_samples)
    throw ConfigError("synthetic user sample range is empty");
  if (!(p.sharp_prob_min >= 0.0 && p.sharp_prob_min <= p.sharp_prob_max && p.sharp_prob_max <= 1.0))
    throw ConfigError("sharp_prob_min/max must satisfy 0 <= min <= max <= 1");
  const auto centers = detail::class_centers(rng, 2, p.dim, p.separation);
  std::vector<Sample> out;
  for (std::size_t u = 0; u < p.num_users; ++u) {
    const bool skewed = rng.bernoulli(p.skewed_user_share);
    auto n = static_cast<std::size_t>(
        p.min_user_samples + rng.index(p.max_user_samples - p.min_user_samples + 1));
    double positive_share = 0.5;
    if (skewed) {
      n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * p.skewed_size_factor));
      const double minority = rng.uniform(0.0, p.skew_minority_max);
      positive_share = rng.bernoulli(p.skew_positive_bias) ? 1.0 - minority : minority;
    }
    const double sharp_prob = rng.uniform(p.sharp_prob_min, p.sharp_prob_max);
    const std::string key = detail::user_key(u);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = rng.bernoulli(positive_share) ? 1 : 0;
      auto s = detail::draw_sample(rng, centers[label], label, rng.bernoulli(sharp_prob), p);
      s.user = key;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace fedprio

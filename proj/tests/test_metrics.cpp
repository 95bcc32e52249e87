#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <vector>

#include "fedprio/metrics.hpp"
#include "fedprio/report.hpp"
#include "oracles.hpp"

using namespace fedprio;

namespace {

RoundRecord record(std::size_t round, std::vector<double> acc) {
  RoundRecord r;
  r.round = round;
  r.device_accuracy = std::move(acc);
  for (std::size_t i = 0; i < r.device_accuracy.size(); ++i) {
    r.device_ids.push_back(i);
    r.device_test_size.push_back(10);
  }
  return r;
}

std::vector<RoundRecord> random_trace(std::mt19937_64& gen, std::size_t rounds, std::size_t devices) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RoundRecord> out;
  for (std::size_t r = 1; r <= rounds; ++r) {
    std::vector<double> acc(devices);
    for (auto& a : acc) a = std::round(u(gen) * 10.0) / 10.0;
    out.push_back(record(r, acc));
  }
  return out;
}

}  // namespace

TEST(GlobalAccuracy, Basics) {
  EXPECT_DOUBLE_EQ(*global_accuracy(std::vector{0.2, 0.4, 0.9}, std::vector<std::size_t>{5, 5, 5}), 0.5);
  EXPECT_DOUBLE_EQ(*global_accuracy(std::vector{1.0, 0.0}, std::vector<std::size_t>{3, 1}), 0.75);
  EXPECT_FALSE(global_accuracy(std::vector<double>{}, std::vector<std::size_t>{}).has_value());
  EXPECT_THROW(global_accuracy(std::vector{1.0}, std::vector<std::size_t>{}), UsageError);
}

TEST(GlobalAccuracy, EqualsPooledCounts) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> acc;
    std::vector<std::size_t> sizes;
    std::size_t correct = 0, total = 0;
    for (int a = 0; a < 20; ++a) {
      const std::size_t n = 1 + gen() % 40;
      const std::size_t c = gen() % (n + 1);
      acc.push_back(static_cast<double>(c) / static_cast<double>(n));
      sizes.push_back(n);
      correct += c;
      total += n;
    }
    EXPECT_EQ(*global_accuracy(acc, sizes), static_cast<double>(correct) / static_cast<double>(total));
  }
}

TEST(RoundsToTarget, TrivialCases) {
  std::vector<RoundRecord> perfect{record(1, {1.0, 1.0, 1.0}), record(2, {1.0, 1.0, 1.0})};
  for (double t : {0.5, 0.9, 1.0})
    for (double f : {0.1, 0.5, 1.0}) EXPECT_EQ(rounds_to_target(perfect, t, f), 1u);
  std::vector<RoundRecord> weak{record(1, {0.5, 1.0}), record(2, {0.4, 1.0})};
  EXPECT_FALSE(rounds_to_target(weak, 0.9, 1.0).has_value());
  EXPECT_EQ(rounds_to_target(weak, 0.9, 0.5), 1u);
}

TEST(RoundsToTarget, CeilingSemantics) {
  // 10 devices, 3 at target: fraction 0.3 is met (0.3 * 10 is 3.0000000000000004 in doubles)
  std::vector<RoundRecord> trace{record(1, {1, 1, 1, 0, 0, 0, 0, 0, 0, 0})};
  EXPECT_EQ(rounds_to_target(trace, 0.9, 0.3), 1u);
  EXPECT_FALSE(rounds_to_target(trace, 0.9, 0.31).has_value());
}

TEST(RoundsToTarget, ThreeRoundFourDeviceTraceMatchesScan) {
  const std::vector<RoundRecord> trace{record(1, {0.2, 0.6, 0.7, 0.9}), record(2, {0.5, 0.8, 0.7, 0.95}),
                                       record(3, {0.85, 0.8, 0.9, 0.6})};
  for (double t : {0.5, 0.7, 0.8, 0.9, 0.96})
    for (double f : {0.25, 0.5, 0.75, 1.0}) EXPECT_EQ(rounds_to_target(trace, t, f), oracle::scan_rounds(trace, t, f));
  EXPECT_EQ(rounds_to_target(trace, 0.8, 0.75), 3u);
  EXPECT_EQ(rounds_to_target(trace, 0.7, 0.75), 2u);
}

TEST(RoundsToTarget, MonotoneInFractionAndTarget) {
  std::mt19937_64 gen(22);
  const auto trace = random_trace(gen, 30, 12);
  const std::vector<double> targets{0.3, 0.5, 0.7, 0.9};
  const std::vector<double> fractions{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto table = make_target_table(trace, targets, fractions);
  auto val = [](const std::optional<std::size_t>& c) { return c ? *c : std::size_t{1000000}; };
  for (std::size_t t = 0; t < targets.size(); ++t)
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      EXPECT_EQ(table.cells[t][f], oracle::scan_rounds(trace, targets[t], fractions[f]));
      if (f > 0) {
        EXPECT_LE(val(table.cells[t][f - 1]), val(table.cells[t][f]));
      }
      if (t > 0) {
        EXPECT_LE(val(table.cells[t - 1][f]), val(table.cells[t][f]));
      }
    }
}

TEST(GainTable, IdentityAntisymmetryAndSubstitution) {
  TargetTable base{{0.7, 0.8}, {0.1, 0.5}, {{5, 58}, {10, std::nullopt}}};
  TargetTable cand{{0.7, 0.8}, {0.1, 0.5}, {{4, std::nullopt}, {12, std::nullopt}}};
  const auto same = gain_table(base, base, 100);
  for (const auto& row : same.gains)
    for (double g : row) EXPECT_EQ(g, 0.0);

  const auto g = gain_table(base, cand, 100);
  EXPECT_EQ(g.gains[0][0], 1.0);
  EXPECT_EQ(g.gains[0][1], -42.0);
  EXPECT_TRUE(g.substituted[0][1]);
  EXPECT_EQ(g.gains[1][0], -2.0);
  EXPECT_EQ(g.gains[1][1], 0.0);  // neither reached
  EXPECT_TRUE(g.substituted[1][1]);
  EXPECT_DOUBLE_EQ(g.averages[0], -20.5);
  EXPECT_TRUE(g.average_flagged[0]);

  const auto back = gain_table(cand, base, 100);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t f = 0; f < 2; ++f) EXPECT_EQ(back.gains[t][f], -g.gains[t][f]);

  TargetTable other{{0.7}, {0.1, 0.5}, {{1, 2}}};
  EXPECT_THROW(gain_table(base, other, 100), UsageError);
}

TEST(ComparisonMatrix, Cells) {
  const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
  EXPECT_EQ(comparison_matrix(labels, labels, labels), (ComparisonMatrix{0, 0, 0, 5}));
  const std::vector<std::size_t> wrong{1, 0, 0, 0, 1};
  EXPECT_EQ(comparison_matrix(labels, wrong, labels), (ComparisonMatrix{0, 0, 5, 0}));
  EXPECT_THROW(comparison_matrix(labels, std::vector<std::size_t>{1}, labels), UsageError);
}

TEST(ComparisonMatrix, RandomInstanceMatchesHandCount) {
  std::mt19937_64 gen(23);
  std::vector<std::size_t> labels(50), base(50), cand(50);
  for (std::size_t i = 0; i < 50; ++i) {
    labels[i] = gen() % 3;
    base[i] = gen() % 3;
    cand[i] = gen() % 3;
  }
  std::size_t cells[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < 50; ++i) ++cells[base[i] == labels[i]][cand[i] == labels[i]];
  const auto m = comparison_matrix(base, cand, labels);
  EXPECT_EQ(m.bw_cw, cells[0][0]);
  EXPECT_EQ(m.bw_cr, cells[0][1]);
  EXPECT_EQ(m.br_cw, cells[1][0]);
  EXPECT_EQ(m.br_cr, cells[1][1]);
  EXPECT_EQ(m.total(), 50u);
}

TEST(Report, CsvFormats) {
  std::vector<RoundRecord> trace{record(1, {0.5, 0.25})};
  trace[0].global_accuracy = 0.375;
  std::ostringstream t, d, tt, g, c;
  report::trace_header(t);
  report::trace_rows(t, "DS", trace);
  EXPECT_EQ(t.str(), "round,experiment_id,global_accuracy\n1,DS,0.375000\n");
  report::device_header(d);
  report::device_rows(d, trace);
  EXPECT_EQ(d.str(), "round,client_id,accuracy,test_size\n1,0,0.500000,10\n1,1,0.250000,10\n");
  TargetTable table{{0.7}, {0.5, 0.9}, {{3, std::nullopt}}};
  report::target_header(tt);
  report::target_rows(tt, "DS", table);
  EXPECT_EQ(tt.str(), "experiment_id,target,fraction,rounds\nDS,0.700000,0.500000,3\nDS,0.700000,0.900000,NR\n");
  report::gain_header(g);
  report::gain_rows(g, "LD", gain_table(table, table, 10));
  EXPECT_EQ(g.str(),
            "candidate_id,target,fraction,gain,avg_flag\nLD,0.700000,0.500000,0.000000,0\n"
            "LD,0.700000,0.900000,0.000000,1\nLD,0.700000,avg,0.000000,1\n");
  report::comparison_header(c);
  report::comparison_row(c, "LD", {1, 2, 3, 4});
  EXPECT_EQ(c.str(), "candidate_id,bw_cw,bw_cr,br_cw,br_cr\nLD,1,2,3,4\n");
}

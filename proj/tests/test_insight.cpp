/*
 * Copyright 2026 The ALARM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "alarm/insight.hpp"
#include "alarm/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace alarmlib {
namespace {

TEST(Ndcg, IdealOrderIsOne) {
  const std::vector<double> truth{0.1, 0.5, 0.0, 0.4};
  EXPECT_EQ(ndcg(truth, truth), 1.0);
  const std::vector<double> one{0.3};
  const std::vector<double> other{0.9};
  EXPECT_EQ(ndcg(one, other), 1.0);
  const std::vector<double> zeros(4, 0.0);
  EXPECT_EQ(ndcg(truth, zeros), 1.0);
}

TEST(Ndcg, ReversedWorkedExample) {
  const std::vector<double> truth{3, 2, 0};
  const std::vector<double> predicted{0, 1, 2};
  const double dcg = 0.0 + 2.0 / std::log2(3.0) + 3.0 / 2.0;
  const double idcg = 3.0 + 2.0 / std::log2(3.0);
  EXPECT_NEAR(ndcg(predicted, truth), dcg / idcg, 1e-12);
  EXPECT_NEAR(ndcg(predicted, truth), 0.648, 1e-3);
}

TEST(Ndcg, MatchesDirectSumAndIgnoresScale) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 12;
    std::vector<double> p(n), t(n);
    for (auto& v : p) v = std::round(u(rng) * 5) / 5;  // force some ties
    for (auto& v : t) v = u(rng);
    const double got = ndcg(p, t);
    EXPECT_NEAR(got, oracle::direct_ndcg(p, t), 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0 + 1e-12);
    std::vector<double> scaled(p);
    for (auto& v : scaled) v *= 7.5;
    EXPECT_EQ(ndcg(scaled, t), got);
  }
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW(ndcg(a, b), InvalidArgument);
}

TEST(Auroc, Extremes) {
  const std::vector<Label> labels{Label::kAnomaly, Label::kAnomaly, Label::kInlier, Label::kInlier};
  const std::vector<double> separated{1, 2, 3, 4};
  EXPECT_EQ(auroc(separated, labels), 1.0);
  const std::vector<double> tied(4, 2.0);
  EXPECT_EQ(auroc(tied, labels), 0.5);
  const std::vector<Label> one_class(4, Label::kInlier);
  EXPECT_THROW(auroc(separated, one_class), InvalidArgument);
}

TEST(Auroc, MatchesPairwiseAndIsRankOnly) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 60;
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(u(rng) * 20);
      l[i] = u(rng) < 0.3 ? Label::kAnomaly : Label::kInlier;
    }
    l[0] = Label::kAnomaly;
    l[1] = Label::kInlier;
    const double got = auroc(s, l);
    EXPECT_NEAR(got, oracle::pairwise_auroc(s, l), 1e-12);
    std::vector<double> warped(s);
    for (auto& v : warped) v = std::exp(v / 3.0) - 4.0;
    EXPECT_NEAR(auroc(warped, l), got, 1e-12);
  }
}

ImportanceVector vec(std::vector<double> w) {
  ImportanceVector v;
  for (std::size_t i = 0; i < w.size(); ++i) v.features.push_back("f" + std::to_string(i));
  v.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  return v;
}

std::vector<ImportanceVector> two_blobs(std::size_t per_blob, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 0.05);
  std::vector<ImportanceVector> out;
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const bool first = i % 2 == 0;
    out.push_back(vec({first ? 0.8 : jitter(rng), first ? jitter(rng) : 0.8, 0.1 + jitter(rng)}));
  }
  return out;
}

TEST(Clustering, SingletonsAndOneCluster) {
  const auto pts = two_blobs(5, 1);
  const auto singles = cluster_anomalies(pts, pts.size());
  std::vector<std::size_t> want(pts.size());
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(singles, want);
  const auto one = cluster_anomalies(pts, 1);
  EXPECT_TRUE(std::all_of(one.begin(), one.end(), [](auto c) { return c == 0; }));
  EXPECT_THROW(cluster_anomalies(pts, 0), InvalidArgument);
  EXPECT_THROW(cluster_anomalies(pts, pts.size() + 1), InvalidArgument);
}

TEST(Clustering, RecoversBlobs) {
  const auto pts = two_blobs(12, 2);
  const auto ids = cluster_anomalies(pts, 2);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(ids[i], i % 2);
}

TEST(Clustering, AverageLinkageMatchesHandExample) {
  // 1-D points 0, 1, 5, 6.2, 20: merges (0,1), (5,6.2), then those two groups
  // (average distance 5.1) before 20 joins.
  Matrix p(5, 1);
  p << 0, 1, 5, 6.2, 20;
  EXPECT_EQ(average_linkage(p, 3), (std::vector<std::size_t>{0, 0, 1, 1, 2}));
  EXPECT_EQ(average_linkage(p, 2), (std::vector<std::size_t>{0, 0, 0, 0, 1}));
}

TEST(Clustering, PermutationInvariant) {
  auto pts = two_blobs(6, 3);
  pts.push_back(vec({0.3, 0.3, 0.4}));
  const auto base = cluster_anomalies(pts, 3);
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ImportanceVector> shuffled;
    for (auto i : perm) shuffled.push_back(pts[i]);
    const auto ids = cluster_anomalies(shuffled, 3);
    for (std::size_t a = 0; a < perm.size(); ++a)
      for (std::size_t b = 0; b < perm.size(); ++b)
        EXPECT_EQ(ids[a] == ids[b], base[perm[a]] == base[perm[b]]);
    // Canonical numbering: first appearances are 0, 1, 2.
    std::size_t next = 0;
    std::vector<bool> seen(3, false);
    for (auto c : ids)
      if (!seen[c]) {
        EXPECT_EQ(c, next++);
        seen[c] = true;
      }
  }
}

TEST(Mds, TwoPointsKeepTheirDistance) {
  const std::vector<ImportanceVector> pts{vec({0.7, 0.2, 0.1}), vec({0.1, 0.3, 0.6})};
  const auto c = mds_embed(pts);
  const double d = (pts[0].weights - pts[1].weights).norm();
  EXPECT_NEAR((c.row(0) - c.row(1)).norm(), d, 1e-9);
  EXPECT_THROW(mds_embed({pts[0]}), InvalidArgument);
}

TEST(Mds, PlanarPointsArePreserved) {
  Rng rng(10);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Vector centre(5), a(5), b(5);
  centre << 0.2, 0.2, 0.2, 0.2, 0.2;
  a << 1, -1, 0, 0, 0;
  b << 0, 0, 1, 1, -2;
  std::vector<ImportanceVector> pts;
  for (int i = 0; i < 25; ++i) {
    const Vector v = centre + u(rng) * a + u(rng) * b;
    pts.push_back(vec(std::vector<double>(v.data(), v.data() + 5)));
  }
  const auto coords = mds_embed(pts);
  const Matrix x = importance_matrix(pts);
  const Matrix want = squared_distances(x).cwiseSqrt();
  const Matrix got = squared_distances(coords).cwiseSqrt();
  EXPECT_LE((want - got).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mds, DuplicatesCoincideAndSignsAreFixed) {
  const std::vector<ImportanceVector> pts{vec({0.5, 0.5, 0}), vec({0.5, 0.5, 0}),
                                          vec({0, 0.2, 0.8}), vec({1, 0, 0})};
  const auto c = mds_embed(pts);
  EXPECT_LE((c.row(0) - c.row(1)).norm(), 1e-9);
  for (Eigen::Index a = 0; a < 2; ++a) {
    Eigen::Index arg = 0;
    c.col(a).cwiseAbs().maxCoeff(&arg);
    EXPECT_GE(c(arg, a), 0.0);
  }
  EXPECT_TRUE(c.allFinite());
}

TEST(Summary, OneClusterAndJson) {
  const auto pts = two_blobs(4, 4);
  std::vector<std::size_t> rows{3, 9, 11, 12, 20, 21, 40, 41};
  std::vector<double> scores{1, 2, 3, 4, 5, 6, 7, 8};
  const auto layout = summarize(rows, scores, pts, 1);
  ASSERT_EQ(layout.entries.size(), 8u);
  for (const auto& e : layout.entries) EXPECT_EQ(e.cluster, 0u);
  const auto doc = summary_to_json(layout);
  EXPECT_EQ(doc["clusters"], 1);
  const auto single = summarize(std::vector<std::size_t>{5}, std::vector<double>{1.0}, {pts[0]}, 1);
  EXPECT_EQ(single.entries[0].x, 0.0);
}

struct LookoutFixture {
  DatasetTable anomalies, inliers;
};

LookoutFixture lookout_fixture(std::size_t anomalies, std::uint64_t seed) {
  const auto all = testing::make_reference(400 + anomalies, seed);
  LookoutFixture f{DatasetTable{all.schema, {}, std::nullopt}, DatasetTable{all.schema, {}, std::nullopt}};
  Rng rng(seed + 1);
  std::uniform_int_distribution<std::size_t> feature(0, 5);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < anomalies) {
      auto p = all.rows[i];
      // Push two real features far out so different pairs explain different points.
      const auto a = feature(rng), b = (a + 1 + i % 5) % 6;
      p.values[a] = p.real(a) + 40.0;
      p.values[b] = p.real(b) - 40.0;
      f.anomalies.rows.push_back(p);
    } else {
      f.inliers.rows.push_back(all.rows[i]);
    }
  }
  return f;
}

TEST(Lookout, SaturatedBudgetTakesAllPairs) {
  const auto f = lookout_fixture(6, 3);
  const auto sel = lookout_select(f.anomalies, f.inliers, 100);
  EXPECT_EQ(sel.pairs.size(), 15u);
  EXPECT_EQ(sel.selected.size(), 15u);
  std::vector<std::size_t> sorted = sel.selected;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& [a, b] : sel.pairs) EXPECT_LT(a, b);
}

TEST(Lookout, GreedyMatchesExhaustiveForTwo) {
  const auto f = lookout_fixture(12, 5);
  const auto sel = lookout_select(f.anomalies, f.inliers, 2);
  ASSERT_EQ(sel.selected.size(), 2u);
  const double greedy = lookout_objective(sel.incrimination, sel.selected);
  const double best = oracle::exhaustive_lookout(sel.incrimination, 2);
  EXPECT_GE(greedy, (1.0 - 1.0 / std::exp(1.0)) * best);
  EXPECT_NEAR(greedy, best, 1e-12);
  EXPECT_NEAR(sel.objective.back(), greedy, 1e-12);
}

TEST(Lookout, ObjectiveIsMonotoneAndSubmodular) {
  const auto f = lookout_fixture(10, 7);
  const auto sel = lookout_select(f.anomalies, f.inliers, 1);
  const Matrix& inc = sel.incrimination;
  EXPECT_GE(inc.minCoeff(), 0.0);
  EXPECT_LE(inc.maxCoeff(), 1.0);
  const auto pairs = static_cast<std::size_t>(inc.rows());
  Rng rng(2);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::size_t> small, large;
    for (std::size_t p = 0; p < pairs; ++p) {
      if (coin(rng)) {
        small.push_back(p);
        large.push_back(p);
      } else if (coin(rng)) {
        large.push_back(p);
      }
    }
    for (std::size_t p = 0; p < pairs; ++p) {
      if (std::find(large.begin(), large.end(), p) != large.end()) continue;
      auto s2 = small, l2 = large;
      s2.push_back(p);
      l2.push_back(p);
      const double gain_small = lookout_objective(inc, s2) - lookout_objective(inc, small);
      const double gain_large = lookout_objective(inc, l2) - lookout_objective(inc, large);
      EXPECT_GE(gain_small, -1e-15);
      EXPECT_GE(gain_small + 1e-12, gain_large);
    }
  }
}

TEST(Lookout, SingleAnomalyPicksItsBestPair) {
  const auto f = lookout_fixture(1, 9);
  const auto sel = lookout_select(f.anomalies, f.inliers, 3);
  Eigen::Index arg = 0;
  sel.incrimination.col(0).maxCoeff(&arg);
  EXPECT_EQ(sel.incrimination(static_cast<Eigen::Index>(sel.selected[0]), 0), sel.incrimination(arg, 0));
}

TEST(Lookout, RejectsBadInput) {
  const FeatureSchema one({{"x", FeatureKind::kReal, {}}, {"c", FeatureKind::kCategorical, {"a", "b"}}});
  DatasetTable t{one, {Point{{1.0, std::string("a")}}}, std::nullopt};
  EXPECT_THROW(lookout_select(t, t, 1), InvalidArgument);
  const auto f = lookout_fixture(2, 1);
  EXPECT_THROW(lookout_select(f.anomalies, f.inliers, 0), InvalidArgument);
}

TEST(Explore, SliceSplitsRows) {
  const auto data = testing::make_reference(30, 8);
  const auto s = explore_slice(data, std::vector<std::size_t>{2, 7}, {"cpu", "region"});
  ASSERT_EQ(s.anomalies.size(), 2u);
  EXPECT_EQ(s.inliers.size(), 28u);
  EXPECT_EQ(std::get<double>(s.anomalies[1][0]), data.rows[7].real(2));
  EXPECT_EQ(std::get<std::string>(s.anomalies[0][1]), data.rows[2].category(6));
  EXPECT_THROW(explore_slice(data, std::vector<std::size_t>{2}, {"nope"}), NotFound);
}

}  // namespace
}  // namespace alarmlib

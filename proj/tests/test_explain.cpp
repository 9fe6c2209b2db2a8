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

#include <set>

#include "alarm/explain.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace alarmlib {
namespace {

DatasetTable plane(std::size_t n, std::uint64_t seed) {
  const FeatureSchema schema({{"a", FeatureKind::kReal, {}}, {"b", FeatureKind::kReal, {}}});
  DatasetTable t{schema, {}, std::nullopt};
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) t.rows.push_back(Point{{g(rng), g(rng)}});
  return t;
}

ScoreReport report_with_levels(const ChainEnsemble& e, std::size_t level) {
  ScoreReport r;
  for (std::size_t m = 0; m < e.chains().size(); ++m) r.per_chain.push_back({1.0, level, {}});
  return r;
}

TEST(ChainUsage, PrefixRule) {
  const auto e = fit(plane(50, 1), {.chains = 64, .depth = 3, .seed = 9});
  std::optional<std::size_t> hit;
  for (std::size_t m = 0; m < e.chains().size(); ++m) {
    const auto& f = e.chains()[m].features;
    if (f[0] == f[2] && f[0] != f[1]) hit = m;
  }
  ASSERT_TRUE(hit.has_value()) << "no chain shaped (a, b, a)";
  const auto& f = e.chains()[*hit].features;
  auto contains = [](const std::vector<std::size_t>& v, std::size_t m) {
    return std::find(v.begin(), v.end(), m) != v.end();
  };
  const auto shallow = chain_usage(report_with_levels(e, 1), e);
  EXPECT_TRUE(contains(shallow.chains[f[0]], *hit));
  EXPECT_FALSE(contains(shallow.chains[f[1]], *hit));
  const auto deep = chain_usage(report_with_levels(e, 3), e);
  EXPECT_TRUE(contains(deep.chains[f[0]], *hit));
  EXPECT_TRUE(contains(deep.chains[f[1]], *hit));
}

TEST(ChainUsage, MatchesPrefixScan) {
  const auto data = testing::make_reference(120, 3);
  const auto e = fit(data, {.chains = 30, .depth = 10, .projection_dims = 12, .seed = 2});
  for (std::size_t i = 0; i < 20; ++i) {
    const auto rep = e.score(data.rows[i]);
    const auto usage = chain_usage(rep, e);
    for (std::size_t f = 0; f < e.dims(); ++f) {
      std::vector<std::size_t> want;
      for (std::size_t m = 0; m < e.chains().size(); ++m) {
        const auto& feats = e.chains()[m].features;
        const auto end = feats.begin() + static_cast<std::ptrdiff_t>(rep.per_chain[m].level);
        if (std::find(feats.begin(), end, f) != end) want.push_back(m);
      }
      EXPECT_EQ(usage.chains[f], want);
    }
  }
}

TEST(ProjectedImportances, FourAndEightGiveOneSeventh) {
  const FeatureSchema schema({{"x", FeatureKind::kReal, {}}});
  DatasetTable t{schema, {Point{{0.0}}, Point{{1.0}}}, std::nullopt};
  const auto e = fit(t, {.chains = 2, .depth = 1});
  ScoreReport r;
  r.per_chain = {{4.0, 1, {}}, {8.0, 1, {}}};
  const auto p = projected_importances(r, e);
  EXPECT_EQ(p.raw[0], 6.0);
  EXPECT_DOUBLE_EQ(p.weights[0], 1.0 / 7.0);
  EXPECT_EQ(p.usage[0], 2u);
  EXPECT_FALSE(p.degenerate);
}

TEST(ProjectedImportances, MatchesDirectRecomputationAndOrder) {
  const auto data = testing::make_reference(150, 5);
  const auto e = fit(data, {.chains = 40, .depth = 10, .projection_dims = 10, .seed = 8});
  for (std::size_t i = 0; i < 15; ++i) {
    const auto rep = e.score(data.rows[i]);
    const auto p = projected_importances(rep, e);
    for (std::size_t f = 0; f < e.dims(); ++f) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t m = 0; m < e.chains().size(); ++m) {
        const auto& feats = e.chains()[m].features;
        const auto end = feats.begin() + static_cast<std::ptrdiff_t>(rep.per_chain[m].level);
        if (std::find(feats.begin(), end, f) != end) {
          sum += rep.per_chain[m].score;
          ++n;
        }
      }
      const auto fi = static_cast<Eigen::Index>(f);
      if (n == 0) {
        EXPECT_EQ(p.weights[fi], 0.0);
        continue;
      }
      EXPECT_NEAR(p.raw[fi], sum / n, 1e-12);
      EXPECT_GE(p.weights[fi], 0.0);
      for (std::size_t g = 0; g < e.dims(); ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        if (p.usage[g] > 0 && p.raw[fi] < p.raw[gi]) EXPECT_GT(p.weights[fi], p.weights[gi]);
      }
    }
  }
}

TEST(AttributionGraph, SingleDimension) {
  const FeatureSchema schema({{"x", FeatureKind::kReal, {}}});
  int empties = 0, singles = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const HashFamily h(1, seed);
    const auto g = build_attribution_graph(Point{{0.3}}, h, schema);
    if (h(0, "x") == 0) {
      EXPECT_TRUE(g.empty());
      ++empties;
    } else {
      EXPECT_EQ(g.edges(), 1u);
      ++singles;
    }
  }
  EXPECT_GT(empties, 0);
  EXPECT_GT(singles, 0);
}

TEST(AttributionGraph, MatchesExhaustiveHashing) {
  const auto schema = testing::reference_schema();
  const auto data = testing::make_reference(30, 6);
  const HashFamily h(50, 123);
  double density = 0.0;
  for (const auto& p : data.rows) {
    const auto g = build_attribution_graph(p, h, schema);
    const Matrix a = g.adjacency();
    for (std::size_t k = 0; k < 50; ++k)
      for (std::size_t j = 0; j < schema.size(); ++j) {
        const std::string key = schema[j].is_real()
                                    ? schema[j].name
                                    : schema[j].name + kConcatSeparator + p.category(j);
        EXPECT_EQ(a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)),
                  h(k, key) != 0 ? 1.0 : 0.0);
      }
    density += a.mean();
  }
  EXPECT_NEAR(density / data.size(), 1.0 / 3.0, 0.05);
}

TEST(Rwr, SymmetricCases) {
  AttributionGraph star;
  star.projected = 1;
  star.original = 2;
  star.projected_neighbors = {{0, 1}};
  star.original_neighbors = {{0}, {0}};
  Vector one(1);
  one << 1.0;
  const auto r = attribute(star, one);
  EXPECT_NEAR(r.original[0], 0.5, 1e-12);
  EXPECT_NEAR(r.original[1], 0.5, 1e-12);

  AttributionGraph full;
  full.projected = 4;
  full.original = 3;
  full.projected_neighbors.assign(4, {0, 1, 2});
  full.original_neighbors.assign(3, {0, 1, 2, 3});
  const auto u = attribute(full, Vector::Constant(4, 0.25));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(u.original[j], 1.0 / 3.0, 1e-12);
}

TEST(Rwr, RejectsDegenerateInput) {
  AttributionGraph empty;
  empty.projected = 2;
  empty.original = 2;
  empty.projected_neighbors.resize(2);
  empty.original_neighbors.resize(2);
  EXPECT_THROW(attribute(empty, Vector::Ones(2)), InvalidArgument);
  AttributionGraph star;
  star.projected = 1;
  star.original = 2;
  star.projected_neighbors = {{0, 1}};
  star.original_neighbors = {{0}, {0}};
  EXPECT_THROW(attribute(star, Vector::Zero(1)), InvalidArgument);
}

TEST(Rwr, MatchesDenseIterationAndConverges) {
  Rng rng(77);
  std::bernoulli_distribution edge(1.0 / 3.0);
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  int tested = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 9, f = 2 + trial % 6;
    AttributionGraph g;
    g.projected = k;
    g.original = f;
    g.projected_neighbors.resize(k);
    g.original_neighbors.resize(f);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < f; ++j)
        if (edge(rng)) {
          g.projected_neighbors[i].push_back(j);
          g.original_neighbors[j].push_back(i);
        }
    // Hashed graphs almost never leave a projected node without neighbors.
    for (std::size_t i = 0; i < k; ++i)
      if (g.projected_neighbors[i].empty()) {
        const std::size_t j = i % f;
        g.projected_neighbors[i].push_back(j);
        g.original_neighbors[j].push_back(i);
      }
    Vector w(static_cast<Eigen::Index>(k));
    for (auto& v : w) v = weight(rng);
    const auto r = attribute(g, w);
    const Vector want = oracle::dense_rwr(g.adjacency(), w, 0.15, 1e-9, 500);
    EXPECT_LE((r.original - want).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_NEAR(r.original.sum(), 1.0, 1e-12);
    EXPECT_GE(r.original.minCoeff(), 0.0);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 500u);
    for (std::size_t j = 0; j < f; ++j)
      if (g.original_neighbors[j].empty()) EXPECT_EQ(r.original[static_cast<Eigen::Index>(j)], 0.0);
    for (std::size_t it = 3; it < r.residuals.size(); ++it)
      if (r.residuals[it - 1] > 1e-13) EXPECT_LT(r.residuals[it], r.residuals[it - 1]);
    ++tested;
  }
  EXPECT_EQ(tested, 200);
}

TEST(Rwr, ConvergesOnHashedGraphs) {
  const auto data = testing::make_reference(40, 19);
  const HashFamily h(50, 5);
  Rng rng(8);
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  for (const auto& p : data.rows) {
    const auto g = build_attribution_graph(p, h, data.schema);
    Vector w(50);
    for (auto& v : w) v = weight(rng);
    const auto r = attribute(g, w);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.original.sum(), 1.0, 1e-12);
  }
}

TEST(Explain, NoProjectionIndicator) {
  const auto e = fit(plane(60, 4), {.chains = 1, .depth = 1, .seed = 3});
  const auto f = e.chains()[0].features[0];
  const auto imp = explain(plane(1, 99).rows[0], e);
  EXPECT_EQ(imp.weights[static_cast<Eigen::Index>(f)], 1.0);
  EXPECT_EQ(imp.weights.sum(), 1.0);
}

TEST(Explain, NoProjectionSumsCategoricalColumns) {
  const auto data = testing::make_reference(200, 12);
  const auto e = fit(data, {.chains = 40, .depth = 12, .seed = 1});
  for (std::size_t i = 0; i < 10; ++i) {
    const auto rep = e.score(data.rows[i]);
    const auto p = projected_importances(rep, e);
    const auto imp = explain(data.rows[i], rep, e);
    Vector want = Vector::Zero(static_cast<Eigen::Index>(data.schema.size()));
    for (std::size_t d = 0; d < e.dims(); ++d)
      want[static_cast<Eigen::Index>(e.layout().feature_of(d))] += p.weights[static_cast<Eigen::Index>(d)];
    want /= want.sum();
    EXPECT_LE((imp.weights - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Explain, SumsToOneAndIsIndividualized) {
  const auto data = testing::make_reference(300, 14);
  const auto e = fit(data, {.chains = 60, .depth = 12, .projection_dims = 16, .seed = 4});
  std::set<std::vector<std::size_t>> rankings;
  for (std::size_t i = 0; i < 30; ++i) {
    const auto imp = explain(data.rows[i], e);
    EXPECT_NEAR(imp.weights.sum(), 1.0, 1e-9);
    EXPECT_GE(imp.weights.minCoeff(), 0.0);
    rankings.insert(imp.ranking());
    const auto again = explain(data.rows[i], e);
    EXPECT_EQ(imp.weights, again.weights);
  }
  EXPECT_GT(rankings.size(), 1u);
}

TEST(Explain, JsonIsSortedAndRoundTrips) {
  const auto data = testing::make_reference(100, 15);
  const auto e = fit(data, {.chains = 20, .depth = 8, .projection_dims = 10, .seed = 4});
  const auto imp = explain(data.rows[0], e);
  const auto doc = importance_to_json(imp);
  double prev = 2.0;
  for (const auto& [name, w] : doc.items()) {
    EXPECT_LE(w.get<double>(), prev);
    prev = w.get<double>();
  }
  const auto back = importance_from_json(nlohmann::json::parse(doc.dump()), data.schema);
  EXPECT_LE((back.weights - imp.weights).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(importance_from_json(nlohmann::json{{"nope", 1.0}}, data.schema), DataError);
}

}  // namespace
}  // namespace alarmlib

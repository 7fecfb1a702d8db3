#include "gcm/error.hpp"
#include "gcm/graph.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gcm;

namespace {

FeatureMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return FeatureMatrix(m);
}

void zero_all(AggregatorParams& p) {
  for (double* d : p.parameter_pointers()) *d = 0.0;
}

std::vector<double*> all_params(AggregatorParams& p) { return p.parameter_pointers(); }

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{{2.0, 2.0}}, Vector{{1.0, 1.0}}), 1.0);
  EXPECT_NEAR(cosine_similarity(Vector{{1.0, 1.0}}, Vector{{1.0, 0.0}}), 0.70710678, 1e-8);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(Vector{{0.0, 0.0}}, Vector{{1.0, 0.0}}), Error);
  try {
    cosine_similarity(Vector{{1.0}}, Vector{{1.0, 0.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Cosine, MatchesOracleAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    Matrix m = oracle::random_matrix(2, 7, rng);
    std::vector<double> u(m.row(0).data(), m.row(0).data() + 7), v(m.row(1).data(), m.row(1).data() + 7);
    const double c = cosine_similarity(u, v);
    EXPECT_NEAR(c, oracle::cosine(u, v), 1e-12);
    EXPECT_EQ(c, cosine_similarity(v, u));
  }
}

TEST(Adjacency, ThreeRowExample) {
  const auto g = build_adjacency(rows({{1, 0}, {1, 1}, {0, 1}}), 0.7);
  const std::vector<std::uint8_t> expected{0, 1, 0, 1, 0, 1, 0, 1, 0};
  EXPECT_EQ(g.adjacency, expected);
  EXPECT_EQ(g.neighbor_lists[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(g.edge_count(), 2u);
}

TEST(Adjacency, ThresholdOneAndDuplicates) {
  EXPECT_EQ(build_adjacency(rows({{1, 0, 0}, {1, 1, 0}, {0, 1, 1}}), 1.0).edge_count(), 0u);
  const auto g = build_adjacency(rows({{0.3, 0.7, 0.1}, {1, 0, 0}, {0.3, 0.7, 0.1}}), 1.0);
  EXPECT_TRUE(g.edge(0, 2));
  EXPECT_TRUE(g.edge(2, 0));
}

TEST(Adjacency, Errors) {
  EXPECT_THROW(build_adjacency(rows({{1, 0}, {0, 0}}), 0.5), Error);
  EXPECT_THROW(build_adjacency(rows({{1, 0}}), 0.0), Error);
  EXPECT_THROW(build_adjacency(rows({{1, 0}}), 1.5), Error);
}

TEST(Adjacency, FuzzedSymmetryAndOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    const Matrix m = oracle::random_matrix(12, 3, rng);
    const double thr = 0.2 + 0.7 * (t / 30.0);
    const auto g = build_adjacency(FeatureMatrix(m), thr);
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_FALSE(g.edge(i, i));
      for (std::size_t j = 0; j < 12; ++j) {
        EXPECT_EQ(g.edge(i, j), g.edge(j, i));
        if (i == j) continue;
        std::vector<double> u(m.row(i).data(), m.row(i).data() + 3), v(m.row(j).data(), m.row(j).data() + 3);
        const double c = oracle::cosine(u, v);
        if (std::abs(c - thr) > 1e-12) {
          EXPECT_EQ(g.edge(i, j), c >= thr);
        }
      }
    }
  }
}

TEST(Aggregate, MeanExamples) {
  const auto p = init_aggregator(AggregatorKind::Mean, 2, 4, 1, 2, 0);
  const std::vector<Vector> two{Vector{{1.0, 2.0}}, Vector{{3.0, 4.0}}};
  EXPECT_TRUE(aggregate(two, p, 0).isApprox(Vector{{2.0, 3.0}}));
  const std::vector<Vector> one{Vector{{0.25, -7.0}}};
  EXPECT_EQ(aggregate(one, p, 0), one[0]);
}

TEST(Aggregate, ZeroLstmGivesHalf) {
  auto p = init_aggregator(AggregatorKind::Lstm, 3, 5, 1, 3, 0);
  zero_all(p);
  const std::vector<Vector> n{Vector{{1.0, -2.0, 3.0}}, Vector{{0.5, 0.5, 0.5}}};
  EXPECT_EQ(aggregate(n, p, 0), Vector::Constant(3, 0.5));
  EXPECT_THROW(aggregate(std::vector<Vector>{}, p, 0), Error);
}

TEST(Recalibrate, IsolatedNodeWithZeroWeights) {
  auto p = init_aggregator(AggregatorKind::Lstm, 2, 3, 2, 2, 1);
  zero_all(p);
  const auto x = rows({{1, 0}, {0, 1}});
  const auto g = build_adjacency(x, 0.9);
  ASSERT_EQ(g.edge_count(), 0u);
  const std::vector<std::size_t> fan{10, 5};
  const auto out = recalibrate(x, g, p, fan, 0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(out(i, j), 0.5);
  }
}

TEST(Recalibrate, UnitNormAndDeterminism) {
  std::mt19937_64 rng(2);
  const FeatureMatrix x(oracle::random_matrix(30, 4, rng));
  const auto g = build_adjacency(x, 0.3);
  const std::vector<std::size_t> fan{4, 3};
  for (auto kind : {AggregatorKind::Mean, AggregatorKind::Lstm}) {
    const auto p = init_aggregator(kind, 4, 6, 2, 3, 7);
    const auto fw = fre_forward(x, g, p, fan, 99);
    for (std::size_t k = 1; k < fw.states.size(); ++k) {
      for (Eigen::Index i = 0; i < fw.states[k].rows(); ++i) EXPECT_NEAR(fw.states[k].row(i).norm(), 1.0, 1e-9);
    }
    EXPECT_EQ(recalibrate(x, g, p, fan, 99), recalibrate(x, g, p, fan, 99));
    EXPECT_EQ(recalibrate(x, g, p, fan, 99, 3), recalibrate(x, g, p, fan, 99, 1));
  }
}

TEST(Recalibrate, PermutationEquivariance) {
  std::mt19937_64 rng(8);
  const FeatureMatrix x(oracle::random_matrix(20, 3, rng));
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const FeatureMatrix xp = x.select_rows(perm);
  const std::vector<std::size_t> fan{3, 2};
  const auto p = init_aggregator(AggregatorKind::Lstm, 3, 4, 2, 3, 1);
  const auto out = recalibrate(x, build_adjacency(x, 0.4), p, fan, 5);
  const auto outp = recalibrate(xp, build_adjacency(xp, 0.4), p, fan, 5);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(outp(i, j), out(perm[i], j));
  }
}

TEST(Recalibrate, DimensionErrors) {
  const auto x = rows({{1, 0}, {0, 1}});
  const auto g = build_adjacency(x, 0.9);
  const auto p = init_aggregator(AggregatorKind::Mean, 3, 4, 2, 3, 1);
  const std::vector<std::size_t> fan{2, 2};
  EXPECT_THROW(recalibrate(x, g, p, fan, 0), Error);
  const auto q = init_aggregator(AggregatorKind::Mean, 2, 4, 2, 3, 1);
  const std::vector<std::size_t> short_fan{2};
  EXPECT_THROW(recalibrate(x, g, q, short_fan, 0), Error);
}

TEST(GraphLoss, Examples) {
  const Vector u{{1.0, 0.0}}, v{{0.0, 1.0}};
  EXPECT_NEAR(graph_loss(u, v, {}, 0), 0.693147, 1e-6);
  const std::vector<Vector> neg{Vector{{0.0, 3.0}}};
  EXPECT_NEAR(graph_loss(u, v, neg, 1), 1.386294, 1e-6);
  double prev = graph_loss(u, u, {}, 0);
  for (double s = 2; s < 64; s *= 2) {
    const double l = graph_loss(u, Vector(u * s), {}, 0);
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(GraphLoss, AllZeroDotsGiveLog2TimesOnePlusQ) {
  const Vector u{{1.0, 0.0, 0.0}}, v{{0.0, 1.0, 0.0}};
  const std::vector<Vector> neg(3, Vector{{0.0, 0.0, 1.0}});
  EXPECT_NEAR(graph_loss(u, v, neg, 3), std::log(2.0) * 4, 1e-12);
}

TEST(GraphLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int draw = 0; draw < 100; ++draw) {
    Vector u = oracle::random_matrix(5, 1, rng).col(0), v = oracle::random_matrix(5, 1, rng).col(0);
    std::vector<Vector> neg{oracle::random_matrix(5, 1, rng).col(0), oracle::random_matrix(5, 1, rng).col(0)};
    const auto g = graph_loss_gradient(u, v, neg, 3);
    auto f = [&] { return graph_loss(u, v, neg, 3); };
    for (Eigen::Index i = 0; i < 5; ++i) {
      EXPECT_LE(oracle::relative_error(g.d_u[i], oracle::central_difference(f, u[i])), 1e-4);
      EXPECT_LE(oracle::relative_error(g.d_v[i], oracle::central_difference(f, v[i])), 1e-4);
      EXPECT_LE(oracle::relative_error(g.d_negatives[1][i], oracle::central_difference(f, neg[1][i])), 1e-4);
    }
  }
}

TEST(FreBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (auto kind : {AggregatorKind::Mean, AggregatorKind::Lstm}) {
    const FeatureMatrix x(oracle::random_matrix(7, 3, rng));
    const auto g = build_adjacency(x, 0.2);
    const std::vector<std::size_t> fan{3, 2};
    auto p = init_aggregator(kind, 3, 4, 2, 2, 3);
    const Matrix w_emb = oracle::random_matrix(7, 4, rng), w_out = oracle::random_matrix(7, 2, rng);
    auto loss = [&] {
      const auto fw = fre_forward(x, g, p, fan, 1);
      return (fw.embeddings().array() * w_emb.array()).sum() + (fw.output.array() * w_out.array()).sum();
    };
    const auto fw = fre_forward(x, g, p, fan, 1);
    const AggregatorParams grad = fre_backward(fw, p, w_emb, &w_out);
    auto gp = const_cast<AggregatorParams&>(grad).parameter_pointers();
    auto pp = all_params(p);
    ASSERT_EQ(gp.size(), pp.size());
    for (std::size_t i = 0; i < pp.size(); ++i) {
      EXPECT_LE(oracle::relative_error(*gp[i], oracle::central_difference(loss, *pp[i])), 1e-4) << i;
    }
  }
}

TEST(TrainFre, ZeroLearningRateKeepsParams) {
  std::mt19937_64 rng(6);
  const FeatureMatrix x(oracle::random_matrix(15, 3, rng));
  const auto g = build_adjacency(x, 0.3);
  const auto p = init_aggregator(AggregatorKind::Lstm, 3, 4, 2, 3, 1);
  const std::vector<std::size_t> fan{3, 2};
  const auto r = train_fre(x, g, p, GraphLossConfig{}, fan, 3, 0.0);
  EXPECT_EQ(r.params, p);
  EXPECT_EQ(r.epoch_losses.size(), 3u);
}

TEST(TrainFre, EmptyGraphThrows) {
  const auto x = rows({{1, 0}, {0, 1}});
  const auto g = build_adjacency(x, 0.9);
  const auto p = init_aggregator(AggregatorKind::Mean, 2, 3, 1, 2, 1);
  const std::vector<std::size_t> fan{2};
  try {
    train_fre(x, g, p, GraphLossConfig{}, fan, 1, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGraph);
  }
}

TEST(TrainFre, LossDecreasesAndCliquesSeparate) {
  // Two cliques of duplicated rows in orthogonal-ish directions.
  Matrix m(12, 4);
  for (int i = 0; i < 12; ++i) {
    if (i < 6) m.row(i) << 1.0, 0.2, 0.0, 0.1;
    else m.row(i) << 0.0, 0.1, 1.0, 0.3;
  }
  const FeatureMatrix x(m);
  const auto g = build_adjacency(x, 0.7);
  ASSERT_EQ(g.edge_count(), 30u);
  const auto p = init_aggregator(AggregatorKind::Lstm, 4, 8, 2, 4, 2);
  const std::vector<std::size_t> fan{10, 5};
  const auto r = train_fre(x, g, p, GraphLossConfig{.seed = 3}, fan, 50, 5.0);
  EXPECT_LE(r.epoch_losses.back(), r.epoch_losses.front());
  const Matrix z = fre_forward(x, g, r.params, fan, 0).embeddings();
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (int i = 0; i < 12; ++i) {
    for (int j = i + 1; j < 12; ++j) {
      const double c = z.row(i).dot(z.row(j));
      ((i < 6) == (j < 6) ? within : across) += c;
      ++((i < 6) == (j < 6) ? nw : na);
    }
  }
  EXPECT_GT(within / nw, across / na);
}

TEST(FreBackward, GraphLossPathMatchesFiniteDifferences) {
  const auto r = gradcheck::graph_check(30, 77);
  EXPECT_LE(r.worst, 1e-4);
}

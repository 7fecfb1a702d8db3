#include "gcm/error.hpp"
#include "gcm/icim.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace gcm;

TEST(AttentionScores, Examples) {
  EXPECT_EQ(attention_scores(Matrix{{0.3}}, Matrix{{-2.0}}, 1), Matrix::Ones(1, 1));
  const Matrix s = attention_scores(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 2);
  EXPECT_NEAR(s(0, 0), 0.6697615493, 1e-9);
  EXPECT_NEAR(s(0, 1), 0.3302384507, 1e-9);
  EXPECT_NEAR(s(1, 1), 0.6697615493, 1e-9);
  EXPECT_NEAR(s(1, 0), 0.3302384507, 1e-9);
  EXPECT_THROW(attention_scores(Matrix::Zero(2, 3), Matrix::Zero(2, 2), 2), Error);
}

TEST(AttentionScores, ShiftInvariance) {
  // Shifting one query along a direction orthogonal to all keys adds a
  // constant to its score row.
  const Matrix k{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  const Matrix r{{0.4, -0.2, 0.0}, {1.0, 2.0, 0.0}};
  Matrix shifted = r;
  shifted(0, 2) = 5.0;
  EXPECT_TRUE(attention_scores(r, k, 3).isApprox(attention_scores(shifted, k, 3), 1e-15));
}

TEST(PairwiseAttention, SingleRow) {
  const Matrix x{{1.0, 2.0}}, y{{3.0, -1.0}};
  const auto a = pairwise_attention(x, y);
  EXPECT_EQ(a.n1, Matrix::Ones(1, 1));
  EXPECT_EQ(a.n2, Matrix::Ones(1, 1));
  EXPECT_EQ(a.a1, (Matrix{{3.0, -2.0}}));
  EXPECT_EQ(a.a1, a.a2);
}

TEST(PairwiseAttention, ZeroX) {
  std::mt19937_64 rng(1);
  const Matrix y = oracle::random_matrix(4, 3, rng);
  const auto a = pairwise_attention(Matrix::Zero(4, 3), y);
  EXPECT_EQ(a.m1, Matrix::Zero(4, 4));
  EXPECT_TRUE(a.n1.isApprox(Matrix::Constant(4, 4, 0.25), 1e-15));
  EXPECT_EQ(a.a1, Matrix::Zero(4, 3));
}

TEST(PairwiseAttention, MatchesOracle) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Matrix x = oracle::random_matrix(3, 2, rng), y = oracle::random_matrix(3, 2, rng);
    const auto a = pairwise_attention(x, y);
    const auto o = oracle::attention(x, y);
    EXPECT_LE(oracle::max_abs_diff(a.a1, o.a1), 1e-9);
    EXPECT_LE(oracle::max_abs_diff(a.a2, o.a2), 1e-9);
    EXPECT_EQ(a.m2, Matrix(a.m1.transpose()));
    for (const Matrix* n : {&a.n1, &a.n2}) {
      for (Eigen::Index i = 0; i < n->rows(); ++i) {
        EXPECT_NEAR(n->row(i).sum(), 1.0, 1e-6);
        EXPECT_GE(n->row(i).minCoeff(), 0.0);
      }
    }
  }
}

TEST(PairwiseAttention, ShapeErrors) {
  EXPECT_THROW(pairwise_attention(Matrix::Zero(2, 3), Matrix::Zero(3, 3)), Error);
  EXPECT_THROW(pairwise_attention(Matrix::Zero(2, 3), Matrix::Zero(2, 2)), Error);
}

TEST(FuseEnriched, ShapeAndZeros) {
  std::mt19937_64 rng(2);
  const Matrix t = oracle::random_matrix(2, 3, rng), a = oracle::random_matrix(2, 3, rng),
               v = oracle::random_matrix(2, 3, rng);
  const Matrix h = fuse_enriched(t, a, v);
  EXPECT_EQ(h.rows(), 2);
  EXPECT_EQ(h.cols(), 27);
  EXPECT_EQ(Matrix(h.leftCols(3)), t);
  EXPECT_EQ(Matrix(h.middleCols(3, 3)), a);
  EXPECT_EQ(Matrix(h.middleCols(6, 3)), v);
  EXPECT_EQ(Matrix(h.middleCols(9, 3)), pairwise_attention(a, v).a1);
  EXPECT_EQ(Matrix(h.middleCols(12, 3)), pairwise_attention(a, v).a2);
  EXPECT_EQ(Matrix(h.middleCols(15, 3)), pairwise_attention(t, a).a1);
  EXPECT_EQ(Matrix(h.middleCols(24, 3)), pairwise_attention(v, t).a2);
  EXPECT_EQ(fuse_enriched(Matrix::Zero(2, 3), Matrix::Zero(2, 3), Matrix::Zero(2, 3)), Matrix::Zero(2, 27));
  EXPECT_THROW(fuse_enriched(t, a, Matrix::Zero(2, 4)), Error);
}

TEST(FuseEnriched, PermutationEquivariance) {
  std::mt19937_64 rng(3);
  const Matrix t = oracle::random_matrix(4, 2, rng), a = oracle::random_matrix(4, 2, rng),
               v = oracle::random_matrix(4, 2, rng);
  std::vector<Eigen::Index> perm(4);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
    return out;
  };
  const Matrix h = fuse_enriched(t, a, v);
  const Matrix hp = fuse_enriched(permute(t), permute(a), permute(v));
  EXPECT_LE(oracle::max_abs_diff(hp, permute(h)), 1e-12);
}

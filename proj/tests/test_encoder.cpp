#include "gcm/encoder.hpp"
#include "gcm/error.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gcm;

namespace {

GruParams zero_gru(Eigen::Index in, Eigen::Index h) {
  GruParams p = init_gru(in, h, Direction::Forward, 0);
  p.w_input.setZero();
  p.w_hidden.setZero();
  p.bias.setZero();
  return p;
}

std::vector<Vector> as_steps(const Matrix& m) {
  std::vector<Vector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

}  // namespace

TEST(Gru, EmptySequence) {
  const auto p = init_gru(3, 4, Direction::Forward, 1);
  EXPECT_TRUE(gru_forward({}, p, Vector::Zero(4)).empty());
}

TEST(Gru, ZeroParametersGiveZeroState) {
  const auto p = zero_gru(3, 2);
  const std::vector<Vector> seq{Vector{{5.0, -1.0, 2.0}}};
  const auto h = gru_forward(seq, p, Vector::Zero(2));
  ASSERT_EQ(h.size(), 1u);
  EXPECT_EQ(h[0], Vector::Zero(2));
}

TEST(Gru, HandTracedStep) {
  // One input, one hidden unit: z = s(1), r = s(0) = 0.5, c = tanh(2 + 0.5 * 0.5 * 1)
  GruParams p = zero_gru(1, 1);
  p.w_input << 1.0, 0.0, 2.0;
  p.w_hidden << 0.0, 0.0, 0.5;
  const double h0 = 1.0;
  const double z = 1.0 / (1.0 + std::exp(-1.0));
  const double c = std::tanh(2.0 + 0.5 * 0.5 * h0);
  const auto h = gru_forward(std::vector<Vector>{Vector::Ones(1)}, p, Vector::Constant(1, h0));
  EXPECT_NEAR(h[0][0], (1 - z) * h0 + z * c, 1e-15);
}

TEST(Gru, StatesStayInOpenUnitInterval) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto p = init_gru(4, 5, Direction::Forward, static_cast<std::uint64_t>(t));
    const Matrix seq = oracle::random_matrix(12, 4, rng, 2.0);
    for (const Vector& h : gru_forward(as_steps(seq), p, Vector::Zero(5))) {
      EXPECT_LT(h.cwiseAbs().maxCoeff(), 1.0);
    }
    // tanh rounds to exactly 1 once saturated.
    const Matrix big = oracle::random_matrix(12, 4, rng, 50.0);
    for (const Vector& h : gru_forward(as_steps(big), p, Vector::Zero(5))) {
      EXPECT_LE(h.cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(Gru, DimensionErrors) {
  const auto p = init_gru(3, 2, Direction::Forward, 1);
  EXPECT_THROW(gru_forward(std::vector<Vector>{Vector::Zero(2)}, p, Vector::Zero(2)), Error);
  EXPECT_THROW(gru_forward(std::vector<Vector>{Vector::Zero(3)}, p, Vector::Zero(3)), Error);
  const auto q = init_gru(3, 4, Direction::Backward, 1);
  EXPECT_THROW(bigru_encode(Matrix::Zero(2, 3), p, q), Error);
}

TEST(BiGru, SingleStepIsConcatenation) {
  const auto f = init_gru(3, 2, Direction::Forward, 1), b = init_gru(3, 2, Direction::Backward, 2);
  const Matrix seq{{0.3, -0.2, 0.9}};
  const Matrix out = bigru_encode(seq, f, b);
  ASSERT_EQ(out.rows(), 1);
  ASSERT_EQ(out.cols(), 4);
  const auto hf = gru_forward(as_steps(seq), f, Vector::Zero(2));
  const auto hb = gru_forward(as_steps(seq), b, Vector::Zero(2));
  EXPECT_EQ(out.row(0).head(2).transpose(), hf[0]);
  EXPECT_EQ(out.row(0).tail(2).transpose(), hb[0]);
}

TEST(BiGru, PalindromeSymmetry) {
  const auto p = init_gru(2, 3, Direction::Forward, 9);
  const Matrix seq{{0.1, 0.7}, {-0.4, 0.2}, {0.1, 0.7}};
  const Matrix out = bigru_encode(seq, p, p);
  for (Eigen::Index t = 0; t < 3; ++t) {
    EXPECT_TRUE(out.row(t).head(3).isApprox(out.row(2 - t).tail(3), 1e-14));
    EXPECT_TRUE(out.row(t).tail(3).isApprox(out.row(2 - t).head(3), 1e-14));
  }
}

TEST(BiGru, RowCountMatchesLength) {
  const auto f = init_gru(2, 3, Direction::Forward, 1), b = init_gru(2, 3, Direction::Backward, 2);
  for (Eigen::Index u : {0, 1, 4, 17}) EXPECT_EQ(bigru_encode(Matrix::Zero(u, 2), f, b).rows(), u);
}

TEST(Dense, IdentityEmbedding) {
  DenseParams p{Matrix::Zero(2, 4), Vector::Zero(2), 0.0};
  p.weight(0, 0) = 1.0;
  p.weight(1, 1) = 1.0;
  const Matrix states{{0.5, -0.3, 9.0, 9.0}, {-1.0, 2.0, 0.0, 0.0}};
  const auto out = dense_project(states, p, Mode::Train, 4);
  EXPECT_EQ(out(0, 0), 0.5);
  EXPECT_EQ(out(0, 1), 0.0);
  EXPECT_EQ(out(1, 0), 0.0);
  EXPECT_EQ(out(1, 1), 2.0);
}

TEST(Dense, SeededMaskAndEvalIndependence) {
  const auto p = init_dense(6, 3, 0.5, 2);
  std::mt19937_64 rng(1);
  const Matrix states = oracle::random_matrix(5, 6, rng);
  EXPECT_EQ(dense_project(states, p, Mode::Train, 17).values(), dense_project(states, p, Mode::Train, 17).values());
  EXPECT_EQ(dense_project(states, p, Mode::Eval, 1).values(), dense_project(states, p, Mode::Eval, 2).values());
  EXPECT_THROW(dense_project(Matrix::Zero(2, 5), p, Mode::Eval, 0), Error);
  EXPECT_THROW(init_dense(6, 3, 1.0, 0), Error);
}

TEST(Dropout, MaskValuesAndExpectation) {
  const Matrix m = dropout_mask(3, 4, 0.25, 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    EXPECT_TRUE(m.data()[i] == 0.0 || m.data()[i] == 1.0 / 0.75);
  }
  EXPECT_EQ(dropout_mask(2, 2, 0.0, 3), Matrix::Ones(2, 2));
  // Mean of dropped-and-scaled inputs over 10^4 masks stays within 2%.
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(4, 8, rng).cwiseAbs();
  for (double p : {0.3, 0.5, 0.7}) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 10000; ++s) total += x.cwiseProduct(dropout_mask(4, 8, p, s)).mean();
    EXPECT_NEAR(total / 10000.0, x.mean(), 0.02 * x.mean()) << p;
  }
}

TEST(EncoderGradients, ZeroLossGivesZeroGradients) {
  const auto params = init_encoder(3, 4, 2, 0.1, 0.1, 1);
  std::mt19937_64 rng(2);
  const std::vector<Matrix> batch{oracle::random_matrix(3, 3, rng)};
  const auto g = encoder_gradients(batch, params, [](std::span<const Matrix>, std::span<Matrix>) { return 0.0; },
                                   Mode::Train, 1);
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.grad, params.zeros_like());
}

TEST(EncoderGradients, ScalingLossScalesGradients) {
  const auto params = init_encoder(3, 4, 2, 0.0, 0.0, 1);
  std::mt19937_64 rng(2);
  const std::vector<Matrix> batch{oracle::random_matrix(3, 3, rng), oracle::random_matrix(2, 3, rng)};
  auto loss = [](double k) {
    return [k](std::span<const Matrix> out, std::span<Matrix> d) {
      double v = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        v += k * out[i].sum();
        d[i].setConstant(k);
      }
      return v;
    };
  };
  auto g1 = encoder_gradients(batch, params, loss(1.0), Mode::Eval, 0).grad;
  auto g3 = encoder_gradients(batch, params, loss(3.0), Mode::Eval, 0).grad;
  std::vector<double> a, b;
  g1.visit([&](double* p, Eigen::Index n) { a.insert(a.end(), p, p + n); });
  g3.visit([&](double* p, Eigen::Index n) { b.insert(b.end(), p, p + n); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 3.0 * a[i], 1e-12 * (1 + std::abs(b[i])));
}

TEST(EncoderGradients, GruMatchesFiniteDifferences) {
  const auto r = gradcheck::gru_check(100, 31);
  EXPECT_GT(r.checked, 10000u);
  EXPECT_LE(r.worst, 1e-4);
  EXPECT_LE(r.worst_coordinate, 1e-4);
}

TEST(EncoderGradients, DenseMatchesFiniteDifferences) {
  const auto r = gradcheck::dense_check(100, 32);
  EXPECT_LE(r.worst, 1e-4);
  EXPECT_LE(r.worst_coordinate, 1e-4);
}

TEST(EncoderGradients, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int draw = 0; draw < 20; ++draw) {
    const auto params = init_encoder(2, 3, 2, 0.0, 0.0, static_cast<std::uint64_t>(draw));
    Matrix seq = oracle::random_matrix(3, 2, rng);
    const Matrix coef = oracle::random_matrix(3, 2, rng);
    auto f = [&] { return gradcheck::quadratic(encoder_forward(seq, params, Mode::Eval, 0).output, coef, nullptr); };
    const auto fw = encoder_forward(seq, params, Mode::Eval, 0);
    Matrix d_out, d_seq;
    gradcheck::quadratic(fw.output, coef, &d_out);
    encoder_backward(fw, params, d_out, &d_seq);
    for (Eigen::Index i = 0; i < seq.size(); ++i) {
      EXPECT_LE(oracle::relative_error(d_seq.data()[i], oracle::central_difference(f, seq.data()[i])), 1e-4);
    }
  }
}

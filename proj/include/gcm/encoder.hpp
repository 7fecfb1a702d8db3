#pragma once

#include "gcm/data.hpp"
#include "gcm/linalg.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gcm {

enum class Direction { Forward, Backward };
enum class Mode { Train, Eval };

/// Gated recurrent unit. Gate blocks are stacked [update, reset, candidate].
struct GruParams {
  Matrix w_input;   // 3H x in
  Matrix w_hidden;  // 3H x H
  Vector bias;      // 3H
  Direction direction = Direction::Forward;

  Eigen::Index input_dim() const { return w_input.cols(); }
  Eigen::Index hidden_dim() const { return w_hidden.cols(); }
};

/// Glorot-uniform weights, zero biases.
GruParams init_gru(Eigen::Index input_dim, Eigen::Index hidden_dim, Direction direction, std::uint64_t seed);

struct DenseParams {
  Matrix weight;  // d x 2H
  Vector bias;    // d
  double dropout = 0.0;
};

DenseParams init_dense(Eigen::Index input_dim, Eigen::Index output_dim, double dropout, std::uint64_t seed);

/// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
/// c = tanh(Wc x + Uc (r * h) + bc), h' = (1 - z) * h + z * c.
std::vector<Vector> gru_forward(std::span<const Vector> sequence, const GruParams& params, const Vector& h0);

/// Row t = [forward state at t, backward state at t]; the backward GRU reads
/// the sequence in reverse.
Matrix bigru_encode(const Matrix& sequence, const GruParams& forward, const GruParams& backward);

/// Row-wise ReLU(W x + b). Train mode applies inverted dropout to the inputs.
FeatureMatrix dense_project(const Matrix& states, const DenseParams& params, Mode mode, std::uint64_t seed);

/// Inverted-dropout keep mask scaled by 1/(1-p); all ones when p == 0.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed);

/// Bi-GRU plus dense projection for one modality.
struct EncoderParams {
  GruParams forward;
  GruParams backward;
  DenseParams dense;
  double input_dropout = 0.0;  // applied to the recurrent inputs in train mode

  EncoderParams zeros_like() const;
  void axpy(double scale, const EncoderParams& other);
  /// Visits every parameter tensor as (data, size) in a fixed order.
  void visit(const std::function<void(double*, Eigen::Index)>& fn);
  friend bool operator==(const EncoderParams&, const EncoderParams&);
};

EncoderParams init_encoder(Eigen::Index input_dim, Eigen::Index hidden_dim, Eigen::Index output_dim,
                           double input_dropout, double dense_dropout, std::uint64_t seed);

struct GruTrace {
  Matrix z, r, c, h;  // u x H each, in processing order
};

struct EncoderForward {
  Matrix input;       // after input dropout
  Matrix input_mask;  // empty in eval mode
  GruTrace forward;
  GruTrace backward;  // processing order (reversed time)
  Matrix states;      // u x 2H
  Matrix dense_mask;  // empty in eval mode
  Matrix dense_in;    // states after dropout
  Matrix output;      // u x d after ReLU
};

EncoderForward encoder_forward(const Matrix& sequence, const EncoderParams& params, Mode mode, std::uint64_t seed);

/// Reverse-mode gradients of a loss given dLoss/d(output). If `d_sequence` is
/// non-null it receives dLoss/d(sequence).
EncoderParams encoder_backward(const EncoderForward& fw, const EncoderParams& params, const Matrix& d_output,
                               Matrix* d_sequence = nullptr);

/// Scalar loss of the per-sequence outputs, returning the value and writing
/// dLoss/d(output) for each sequence.
using EncoderLoss = std::function<double(std::span<const Matrix> outputs, std::span<Matrix> d_outputs)>;

struct EncoderGradients {
  double loss = 0.0;
  EncoderParams grad;
};

EncoderGradients encoder_gradients(std::span<const Matrix> batch, const EncoderParams& params,
                                   const EncoderLoss& loss, Mode mode, std::uint64_t seed);

}  // namespace gcm

#include "gcm/encoder.hpp"

#include "gcm/error.hpp"
#include "gcm/random.hpp"

#include <algorithm>

namespace gcm {

namespace {

GruTrace run_gru(const Matrix& seq, const GruParams& p, bool reverse) {
  const Eigen::Index u = seq.rows();
  const Eigen::Index h = p.hidden_dim();
  GruTrace tr{Matrix(u, h), Matrix(u, h), Matrix(u, h), Matrix(u, h)};
  if (u == 0) return tr;
  const Matrix xw = (seq * p.w_input.transpose()).rowwise() + p.bias.transpose();
  Vector prev = Vector::Zero(h);
  for (Eigen::Index s = 0; s < u; ++s) {
    const Eigen::Index t = reverse ? u - 1 - s : s;
    const Vector a = xw.row(t).transpose();
    const Vector hz = p.w_hidden.topRows(2 * h) * prev;
    Vector z(h), r(h);
    for (Eigen::Index j = 0; j < h; ++j) {
      z[j] = sigmoid(a[j] + hz[j]);
      r[j] = sigmoid(a[h + j] + hz[h + j]);
    }
    const Vector ac = a.tail(h) + p.w_hidden.bottomRows(h) * r.cwiseProduct(prev);
    const Vector c = ac.unaryExpr([](double x) { return std::tanh(x); });
    const Vector next = (Vector::Ones(h) - z).cwiseProduct(prev) + z.cwiseProduct(c);
    tr.z.row(s) = z.transpose();
    tr.r.row(s) = r.transpose();
    tr.c.row(s) = c.transpose();
    tr.h.row(s) = next.transpose();
    prev = next;
  }
  return tr;
}

/// Backprop through one GRU trace. d_h rows are in processing order.
void backprop_gru(const Matrix& seq, const GruParams& p, const GruTrace& tr, bool reverse, const Matrix& d_h,
                  GruParams& grad, Matrix* d_seq) {
  const Eigen::Index u = seq.rows();
  const Eigen::Index h = p.hidden_dim();
  if (u == 0) return;
  Matrix d_a(u, 3 * h);  // pre-activation gradients, processing order
  Vector carry = Vector::Zero(h);
  for (Eigen::Index s = u; s-- > 0;) {
    const Vector prev = s > 0 ? Vector(tr.h.row(s - 1).transpose()) : Vector::Zero(h);
    const Vector z = tr.z.row(s).transpose();
    const Vector r = tr.r.row(s).transpose();
    const Vector c = tr.c.row(s).transpose();
    const Vector dh = d_h.row(s).transpose() + carry;
    const Vector dz = dh.cwiseProduct(c - prev);
    const Vector dc = dh.cwiseProduct(z);
    Vector d_prev = dh.cwiseProduct(Vector::Ones(h) - z);
    const Vector dac = dc.cwiseProduct(Vector::Ones(h) - c.cwiseAbs2());
    const Vector d_rh = p.w_hidden.bottomRows(h).transpose() * dac;
    const Vector dr = d_rh.cwiseProduct(prev);
    d_prev += d_rh.cwiseProduct(r);
    const Vector daz = dz.cwiseProduct(z.cwiseProduct(Vector::Ones(h) - z));
    const Vector dar = dr.cwiseProduct(r.cwiseProduct(Vector::Ones(h) - r));
    Vector dzr(2 * h);
    dzr << daz, dar;
    d_prev += p.w_hidden.topRows(2 * h).transpose() * dzr;
    grad.w_hidden.topRows(2 * h) += dzr * prev.transpose();
    grad.w_hidden.bottomRows(h) += dac * r.cwiseProduct(prev).transpose();
    d_a.row(s) << daz.transpose(), dar.transpose(), dac.transpose();
    carry = d_prev;
  }
  // Reorder processing-order rows back to time order for the input products.
  Matrix d_a_time(u, 3 * h);
  for (Eigen::Index s = 0; s < u; ++s) d_a_time.row(reverse ? u - 1 - s : s) = d_a.row(s);
  grad.w_input += d_a_time.transpose() * seq;
  grad.bias += d_a_time.colwise().sum().transpose();
  if (d_seq != nullptr) *d_seq += d_a_time * p.w_input;
}

}  // namespace

GruParams init_gru(Eigen::Index input_dim, Eigen::Index hidden_dim, Direction direction, std::uint64_t seed) {
  require(input_dim >= 1 && hidden_dim >= 1, ErrorCode::ConfigInvalid, "GRU dimensions must be positive");
  Rng rng(derive_seed(seed, "gru-init"));
  GruParams p;
  p.w_input = glorot_uniform(3 * hidden_dim, input_dim, rng);
  p.w_hidden = glorot_uniform(3 * hidden_dim, hidden_dim, rng);
  p.bias = Vector::Zero(3 * hidden_dim);
  p.direction = direction;
  return p;
}

DenseParams init_dense(Eigen::Index input_dim, Eigen::Index output_dim, double dropout, std::uint64_t seed) {
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::ConfigInvalid, "dropout must lie in [0, 1)");
  Rng rng(derive_seed(seed, "dense-init"));
  return DenseParams{glorot_uniform(output_dim, input_dim, rng), Vector::Zero(output_dim), dropout};
}

std::vector<Vector> gru_forward(std::span<const Vector> sequence, const GruParams& params, const Vector& h0) {
  const Eigen::Index h = params.hidden_dim();
  require(h0.size() == h, ErrorCode::DimensionMismatch, "h0 does not match the hidden dimension");
  std::vector<Vector> out;
  out.reserve(sequence.size());
  Vector prev = h0;
  for (const Vector& x : sequence) {
    require(x.size() == params.input_dim(), ErrorCode::DimensionMismatch, "input does not match the GRU");
    const Vector a = params.w_input * x + params.bias;
    const Vector hz = params.w_hidden.topRows(2 * h) * prev;
    Vector z(h), r(h);
    for (Eigen::Index j = 0; j < h; ++j) {
      z[j] = sigmoid(a[j] + hz[j]);
      r[j] = sigmoid(a[h + j] + hz[h + j]);
    }
    const Vector c =
        (a.tail(h) + params.w_hidden.bottomRows(h) * r.cwiseProduct(prev)).unaryExpr([](double v) { return std::tanh(v); });
    prev = (Vector::Ones(h) - z).cwiseProduct(prev) + z.cwiseProduct(c);
    out.push_back(prev);
  }
  return out;
}

Matrix bigru_encode(const Matrix& sequence, const GruParams& forward, const GruParams& backward) {
  require(forward.hidden_dim() == backward.hidden_dim(), ErrorCode::DimensionMismatch,
          "forward and backward hidden sizes differ");
  require(sequence.rows() == 0 || (sequence.cols() == forward.input_dim() && sequence.cols() == backward.input_dim()),
          ErrorCode::DimensionMismatch, "sequence width does not match the GRU input dimension");
  const Eigen::Index u = sequence.rows();
  const Eigen::Index h = forward.hidden_dim();
  const GruTrace f = run_gru(sequence, forward, false);
  const GruTrace b = run_gru(sequence, backward, true);
  Matrix out(u, 2 * h);
  for (Eigen::Index t = 0; t < u; ++t) out.row(t) << f.h.row(t), b.h.row(u - 1 - t);
  return out;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed) {
  Matrix mask = Matrix::Ones(rows, cols);
  if (p <= 0.0) return mask;
  Rng rng(derive_seed(seed, "dropout"));
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

FeatureMatrix dense_project(const Matrix& states, const DenseParams& params, Mode mode, std::uint64_t seed) {
  require(states.cols() == params.weight.cols(), ErrorCode::DimensionMismatch, "states width != dense input");
  Matrix in = states;
  if (mode == Mode::Train) in = in.cwiseProduct(dropout_mask(in.rows(), in.cols(), params.dropout, seed));
  Matrix out = ((in * params.weight.transpose()).rowwise() + params.bias.transpose()).cwiseMax(0.0);
  return FeatureMatrix(std::move(out));
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  z.visit([](double* p, Eigen::Index n) { std::fill(p, p + n, 0.0); });
  return z;
}

void EncoderParams::visit(const std::function<void(double*, Eigen::Index)>& fn) {
  for (GruParams* g : {&forward, &backward}) {
    fn(g->w_input.data(), g->w_input.size());
    fn(g->w_hidden.data(), g->w_hidden.size());
    fn(g->bias.data(), g->bias.size());
  }
  fn(dense.weight.data(), dense.weight.size());
  fn(dense.bias.data(), dense.bias.size());
}

void EncoderParams::axpy(double scale, const EncoderParams& other) {
  std::vector<const double*> src;
  const_cast<EncoderParams&>(other).visit([&](double* p, Eigen::Index) { src.push_back(p); });
  std::size_t k = 0;
  visit([&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] += scale * src[k][i];
    ++k;
  });
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
  auto eq = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
  auto gru_eq = [&](const GruParams& x, const GruParams& y) {
    return x.direction == y.direction && eq(x.w_input, y.w_input) && eq(x.w_hidden, y.w_hidden) && eq(x.bias, y.bias);
  };
  return gru_eq(a.forward, b.forward) && gru_eq(a.backward, b.backward) && eq(a.dense.weight, b.dense.weight) &&
         eq(a.dense.bias, b.dense.bias) && a.dense.dropout == b.dense.dropout && a.input_dropout == b.input_dropout;
}

EncoderParams init_encoder(Eigen::Index input_dim, Eigen::Index hidden_dim, Eigen::Index output_dim,
                           double input_dropout, double dense_dropout, std::uint64_t seed) {
  require(input_dropout >= 0.0 && input_dropout < 1.0, ErrorCode::ConfigInvalid, "dropout must lie in [0, 1)");
  return EncoderParams{init_gru(input_dim, hidden_dim, Direction::Forward, derive_seed(seed, "fwd")),
                       init_gru(input_dim, hidden_dim, Direction::Backward, derive_seed(seed, "bwd")),
                       init_dense(2 * hidden_dim, output_dim, dense_dropout, derive_seed(seed, "dense")),
                       input_dropout};
}

EncoderForward encoder_forward(const Matrix& sequence, const EncoderParams& params, Mode mode, std::uint64_t seed) {
  require(sequence.cols() == params.forward.input_dim(), ErrorCode::DimensionMismatch,
          "sequence width does not match the encoder");
  EncoderForward fw;
  fw.input = sequence;
  if (mode == Mode::Train && params.input_dropout > 0.0) {
    fw.input_mask = dropout_mask(sequence.rows(), sequence.cols(), params.input_dropout, derive_seed(seed, "in"));
    fw.input = fw.input.cwiseProduct(fw.input_mask);
  }
  const Eigen::Index u = sequence.rows();
  const Eigen::Index h = params.forward.hidden_dim();
  fw.forward = run_gru(fw.input, params.forward, false);
  fw.backward = run_gru(fw.input, params.backward, true);
  fw.states.resize(u, 2 * h);
  for (Eigen::Index t = 0; t < u; ++t) fw.states.row(t) << fw.forward.h.row(t), fw.backward.h.row(u - 1 - t);
  fw.dense_in = fw.states;
  if (mode == Mode::Train && params.dense.dropout > 0.0) {
    fw.dense_mask = dropout_mask(u, 2 * h, params.dense.dropout, derive_seed(seed, "dense"));
    fw.dense_in = fw.dense_in.cwiseProduct(fw.dense_mask);
  }
  fw.output =
      ((fw.dense_in * params.dense.weight.transpose()).rowwise() + params.dense.bias.transpose()).cwiseMax(0.0);
  return fw;
}

EncoderParams encoder_backward(const EncoderForward& fw, const EncoderParams& params, const Matrix& d_output,
                               Matrix* d_sequence) {
  require(d_output.rows() == fw.output.rows() && d_output.cols() == fw.output.cols(), ErrorCode::DimensionMismatch,
          "d_output shape mismatch");
  EncoderParams grad = params.zeros_like();
  const Eigen::Index u = fw.output.rows();
  const Eigen::Index h = params.forward.hidden_dim();
  const Matrix d_pre = d_output.cwiseProduct((fw.output.array() > 0.0).cast<double>().matrix());
  grad.dense.weight = d_pre.transpose() * fw.dense_in;
  grad.dense.bias = d_pre.colwise().sum().transpose();
  Matrix d_states = d_pre * params.dense.weight;
  if (fw.dense_mask.size() > 0) d_states = d_states.cwiseProduct(fw.dense_mask);

  Matrix d_fwd = d_states.leftCols(h);
  Matrix d_bwd(u, h);  // processing order
  for (Eigen::Index t = 0; t < u; ++t) d_bwd.row(u - 1 - t) = d_states.row(t).rightCols(h);

  Matrix d_in = Matrix::Zero(fw.input.rows(), fw.input.cols());
  backprop_gru(fw.input, params.forward, fw.forward, false, d_fwd, grad.forward, &d_in);
  backprop_gru(fw.input, params.backward, fw.backward, true, d_bwd, grad.backward, &d_in);
  if (d_sequence != nullptr) {
    if (fw.input_mask.size() > 0) d_in = d_in.cwiseProduct(fw.input_mask);
    *d_sequence = std::move(d_in);
  }
  return grad;
}

EncoderGradients encoder_gradients(std::span<const Matrix> batch, const EncoderParams& params,
                                   const EncoderLoss& loss, Mode mode, std::uint64_t seed) {
  std::vector<EncoderForward> forwards;
  std::vector<Matrix> outputs;
  forwards.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forwards.push_back(encoder_forward(batch[i], params, mode, derive_seed(seed, "batch", i)));
    outputs.push_back(forwards.back().output);
  }
  std::vector<Matrix> d_outputs(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) d_outputs[i] = Matrix::Zero(outputs[i].rows(), outputs[i].cols());
  EncoderGradients out;
  out.loss = loss(outputs, d_outputs);
  out.grad = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) out.grad.axpy(1.0, encoder_backward(forwards[i], params, d_outputs[i]));
  return out;
}

}  // namespace gcm

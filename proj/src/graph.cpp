#include "gcm/graph.hpp"

#include "gcm/error.hpp"
#include "gcm/parallel.hpp"
#include "gcm/random.hpp"

#include <algorithm>
#include <numeric>

namespace gcm {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::DimensionMismatch, "parameter shape mismatch");
}

template <class Fn>
void for_each_tensor(AggregatorParams& p, Fn&& fn) {
  for (auto& layer : p.layers) {
    fn(layer.lstm.w_input.data(), layer.lstm.w_input.size());
    fn(layer.lstm.w_hidden.data(), layer.lstm.w_hidden.size());
    fn(layer.lstm.bias.data(), layer.lstm.bias.size());
    fn(layer.agg_weight.data(), layer.agg_weight.size());
    fn(layer.agg_bias.data(), layer.agg_bias.size());
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  fn(p.transform_weight.data(), p.transform_weight.size());
  fn(p.transform_bias.data(), p.transform_bias.size());
}

/// Runs the LSTM cell over `inputs` (rows of `states` in `order`), recording each step.
std::vector<FreForward::LstmStep> run_lstm(const LstmCell& cell, const Matrix& states,
                                           std::span<const std::size_t> order) {
  const Eigen::Index h = cell.hidden();
  std::vector<FreForward::LstmStep> steps;
  steps.reserve(order.size());
  Vector h_prev = Vector::Zero(h);
  Vector c_prev = Vector::Zero(h);
  for (std::size_t idx : order) {
    Vector pre = cell.w_input * states.row(static_cast<Eigen::Index>(idx)).transpose() + cell.w_hidden * h_prev +
                 cell.bias;
    FreForward::LstmStep step;
    step.gates.resize(4 * h);
    for (Eigen::Index j = 0; j < h; ++j) {
      step.gates[j] = sigmoid(pre[j]);
      step.gates[h + j] = sigmoid(pre[h + j]);
      step.gates[2 * h + j] = std::tanh(pre[2 * h + j]);
      step.gates[3 * h + j] = sigmoid(pre[3 * h + j]);
    }
    step.c = step.gates.segment(h, h).cwiseProduct(c_prev) +
             step.gates.segment(0, h).cwiseProduct(step.gates.segment(2 * h, h));
    step.h = step.gates.segment(3 * h, h).cwiseProduct(step.c.unaryExpr([](double x) { return std::tanh(x); }));
    h_prev = step.h;
    c_prev = step.c;
    steps.push_back(std::move(step));
  }
  return steps;
}

std::vector<std::size_t> sample_neighbors(const GraphContext& graph, std::span<const std::uint64_t> keys,
                                          std::size_t node, std::size_t fanout, std::uint64_t seed,
                                          std::size_t layer) {
  std::vector<std::size_t> cand = graph.neighbor_lists[node];
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  Rng rng(derive_seed(derive_seed(seed, keys[node]), "sample", layer));
  shuffle(std::span<std::size_t>(cand), rng);
  if (cand.size() > fanout) cand.resize(fanout);
  return cand;
}

}  // namespace

std::size_t GraphContext::edge_count() const {
  std::size_t total = 0;
  for (const auto& nl : neighbor_lists) total += nl.size();
  return total / 2;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), ErrorCode::LengthMismatch, "cosine of vectors with different lengths");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  require(nu > 0.0 && nv > 0.0, ErrorCode::ZeroVector, "cosine of a zero vector");
  // sqrt(nu * nv) keeps identical vectors at exactly 1.
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

GraphContext build_adjacency(const FeatureMatrix& features, double threshold) {
  require(threshold > 0.0 && threshold <= 1.0, ErrorCode::InvalidSpec, "threshold must lie in (0, 1]");
  GraphContext g;
  g.nodes = features.rows();
  g.threshold = threshold;
  g.adjacency.assign(g.nodes * g.nodes, 0);
  g.neighbor_lists.assign(g.nodes, {});
  for (std::size_t i = 0; i < g.nodes; ++i) {
    require(features.values().row(static_cast<Eigen::Index>(i)).norm() > 0.0, ErrorCode::ZeroVector, "row " + std::to_string(i) + " has zero norm");
  }
  for (std::size_t i = 0; i < g.nodes; ++i) {
    for (std::size_t j = i + 1; j < g.nodes; ++j) {
      if (cosine_similarity(features.row(i), features.row(j)) >= threshold) {
        g.adjacency[i * g.nodes + j] = 1;
        g.adjacency[j * g.nodes + i] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < g.nodes; ++i) {
    for (std::size_t j = 0; j < g.nodes; ++j) {
      if (g.adjacency[i * g.nodes + j]) g.neighbor_lists[i].push_back(j);
    }
  }
  return g;
}

AggregatorParams AggregatorParams::zeros_like() const {
  AggregatorParams z = *this;
  for_each_tensor(z, [](double* p, Eigen::Index n) { std::fill(p, p + n, 0.0); });
  return z;
}

void AggregatorParams::axpy(double scale, const AggregatorParams& other) {
  auto& o = const_cast<AggregatorParams&>(other);
  std::vector<std::pair<double*, Eigen::Index>> src;
  for_each_tensor(o, [&](double* p, Eigen::Index n) { src.emplace_back(p, n); });
  std::size_t k = 0;
  for_each_tensor(*this, [&](double* p, Eigen::Index n) {
    require(k < src.size() && src[k].second == n, ErrorCode::DimensionMismatch, "axpy shape mismatch");
    for (Eigen::Index i = 0; i < n; ++i) p[i] += scale * src[k].first[i];
    ++k;
  });
}

std::vector<double*> AggregatorParams::parameter_pointers() {
  std::vector<double*> out;
  for_each_tensor(*this, [&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(p + i);
  });
  return out;
}

bool AggregatorParams::all_finite() const {
  bool ok = true;
  for_each_tensor(const_cast<AggregatorParams&>(*this), [&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) ok = ok && std::isfinite(p[i]);
  });
  return ok;
}

bool operator==(const AggregatorParams& a, const AggregatorParams& b) {
  if (a.kind != b.kind || a.layers.size() != b.layers.size()) return false;
  auto eq = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& p = a.layers[i];
    const auto& q = b.layers[i];
    if (!eq(p.lstm.w_input, q.lstm.w_input) || !eq(p.lstm.w_hidden, q.lstm.w_hidden) ||
        !eq(p.lstm.bias, q.lstm.bias) || !eq(p.agg_weight, q.agg_weight) || !eq(p.agg_bias, q.agg_bias) ||
        !eq(p.weight, q.weight) || !eq(p.bias, q.bias)) {
      return false;
    }
  }
  return eq(a.transform_weight, b.transform_weight) && eq(a.transform_bias, b.transform_bias);
}

AggregatorParams init_aggregator(AggregatorKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim,
                                 std::size_t depth, Eigen::Index output_dim, std::uint64_t seed) {
  require(depth >= 1 && input_dim >= 1 && hidden_dim >= 1 && output_dim >= 1, ErrorCode::ConfigInvalid,
          "aggregator dimensions and depth must be positive");
  Rng rng(derive_seed(seed, "fre-init"));
  AggregatorParams p;
  p.kind = kind;
  Eigen::Index in = input_dim;
  for (std::size_t k = 0; k < depth; ++k) {
    FreLayer layer;
    const Eigen::Index h = in;
    layer.lstm.w_input = glorot_uniform(4 * h, in, rng);
    layer.lstm.w_hidden = glorot_uniform(4 * h, h, rng);
    layer.lstm.bias = Vector::Zero(4 * h);
    layer.agg_weight = glorot_uniform(in, h, rng);
    layer.agg_bias = Vector::Zero(in);
    layer.weight = glorot_uniform(hidden_dim, 2 * in, rng);
    layer.bias = Vector::Zero(hidden_dim);
    p.layers.push_back(std::move(layer));
    in = hidden_dim;
  }
  p.transform_weight = glorot_uniform(output_dim, in, rng);
  p.transform_bias = Vector::Zero(output_dim);
  return p;
}

Vector aggregate(std::span<const Vector> neighbor_states, const AggregatorParams& params, std::size_t layer) {
  require(layer < params.depth(), ErrorCode::DimensionMismatch, "layer index out of range");
  const FreLayer& l = params.layers[layer];
  const Eigen::Index dim = l.input_dim();
  for (const Vector& s : neighbor_states) {
    require(s.size() == dim, ErrorCode::DimensionMismatch, "neighbor state has wrong dimension");
  }
  if (params.kind == AggregatorKind::Mean) {
    Vector mean = Vector::Zero(dim);
    if (neighbor_states.empty()) return mean;
    for (const Vector& s : neighbor_states) mean += s;
    return mean / static_cast<double>(neighbor_states.size());
  }
  require(!neighbor_states.empty(), ErrorCode::EmptyNeighborhood, "LSTM aggregator needs at least one neighbor");
  Matrix stacked(static_cast<Eigen::Index>(neighbor_states.size()), dim);
  for (std::size_t i = 0; i < neighbor_states.size(); ++i) {
    stacked.row(static_cast<Eigen::Index>(i)) = neighbor_states[i].transpose();
  }
  std::vector<std::size_t> order(neighbor_states.size());
  std::iota(order.begin(), order.end(), 0);
  const auto steps = run_lstm(l.lstm, stacked, order);
  return sigmoid(Vector(l.agg_weight * steps.back().h + l.agg_bias));
}

FreForward fre_forward(const FeatureMatrix& features, const GraphContext& graph, const AggregatorParams& params,
                       std::span<const std::size_t> fanouts, std::uint64_t seed, unsigned threads) {
  require(fanouts.size() == params.depth(), ErrorCode::DimensionMismatch, "fanouts length must equal depth");
  require(graph.nodes == features.rows(), ErrorCode::DimensionMismatch, "graph size != feature rows");
  require(static_cast<Eigen::Index>(features.cols()) == params.input_dim(), ErrorCode::DimensionMismatch,
          "feature dimension != aggregator input dimension");
  const std::size_t n = features.rows();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t v = 0; v < n; ++v) keys[v] = content_hash(features.row(v));

  FreForward fw;
  fw.states.push_back(features.values());
  fw.caches.resize(params.depth());
  for (std::size_t k = 0; k < params.depth(); ++k) {
    const FreLayer& layer = params.layers[k];
    const Matrix& prev = fw.states.back();
    const Eigen::Index in = layer.input_dim();
    Matrix next(static_cast<Eigen::Index>(n), layer.output_dim());
    auto& caches = fw.caches[k];
    caches.resize(n);
    parallel_for(n, threads, [&](std::size_t v) {
      FreForward::NodeCache& cache = caches[v];
      cache.sampled = sample_neighbors(graph, keys, v, fanouts[k], seed, k);
      if (cache.sampled.empty()) {
        cache.neighborhood = Vector::Zero(in);
      } else if (params.kind == AggregatorKind::Mean) {
        cache.neighborhood = Vector::Zero(in);
        for (std::size_t u : cache.sampled) cache.neighborhood += prev.row(static_cast<Eigen::Index>(u)).transpose();
        cache.neighborhood /= static_cast<double>(cache.sampled.size());
      } else {
        cache.steps = run_lstm(layer.lstm, prev, cache.sampled);
        cache.neighborhood = sigmoid(Vector(layer.agg_weight * cache.steps.back().h + layer.agg_bias));
      }
      Vector concat(2 * in);
      concat << prev.row(static_cast<Eigen::Index>(v)).transpose(), cache.neighborhood;
      cache.activated = sigmoid(Vector(layer.weight * concat + layer.bias));
      cache.norm = cache.activated.norm();
      next.row(static_cast<Eigen::Index>(v)) = (cache.activated / cache.norm).transpose();
    });
    fw.states.push_back(std::move(next));
  }
  const Matrix& emb = fw.states.back();
  fw.output.resize(static_cast<Eigen::Index>(n), params.output_dim());
  for (std::size_t v = 0; v < n; ++v) {
    const auto r = static_cast<Eigen::Index>(v);
    fw.output.row(r) =
        sigmoid(Vector(params.transform_weight * emb.row(r).transpose() + params.transform_bias)).transpose();
  }
  return fw;
}

FeatureMatrix recalibrate(const FeatureMatrix& features, const GraphContext& graph, const AggregatorParams& params,
                          std::span<const std::size_t> fanouts, std::uint64_t seed, unsigned threads) {
  return FeatureMatrix(fre_forward(features, graph, params, fanouts, seed, threads).output);
}

AggregatorParams fre_backward(const FreForward& fw, const AggregatorParams& params, const Matrix& d_embeddings,
                              const Matrix* d_output) {
  AggregatorParams grad = params.zeros_like();
  const Eigen::Index n = fw.embeddings().rows();
  require(d_embeddings.rows() == n && d_embeddings.cols() == fw.embeddings().cols(), ErrorCode::DimensionMismatch,
          "d_embeddings shape mismatch");
  Matrix d_states = d_embeddings;

  if (d_output != nullptr) {
    check_same_shape(*d_output, fw.output);
    for (Eigen::Index v = 0; v < n; ++v) {
      const Vector out = fw.output.row(v).transpose();
      const Vector d_pre = d_output->row(v).transpose().cwiseProduct(out.cwiseProduct(Vector::Ones(out.size()) - out));
      grad.transform_weight += d_pre * fw.embeddings().row(v);
      grad.transform_bias += d_pre;
      d_states.row(v) += (params.transform_weight.transpose() * d_pre).transpose();
    }
  }

  for (std::size_t kk = params.depth(); kk-- > 0;) {
    const FreLayer& layer = params.layers[kk];
    FreLayer& g = grad.layers[kk];
    const Matrix& prev = fw.states[kk];
    const Matrix& cur = fw.states[kk + 1];
    const Eigen::Index in = layer.input_dim();
    const Eigen::Index hd = layer.lstm.hidden();
    Matrix d_prev = Matrix::Zero(prev.rows(), prev.cols());
    for (Eigen::Index v = 0; v < n; ++v) {
      const auto& cache = fw.caches[kk][static_cast<std::size_t>(v)];
      const Vector h = cur.row(v).transpose();
      const Vector dh = d_states.row(v).transpose();
      const Vector ds = (dh - h * h.dot(dh)) / cache.norm;
      const Vector& s = cache.activated;
      const Vector d_pre = ds.cwiseProduct(s.cwiseProduct(Vector::Ones(s.size()) - s));
      Vector concat(2 * in);
      concat << prev.row(v).transpose(), cache.neighborhood;
      g.weight += d_pre * concat.transpose();
      g.bias += d_pre;
      const Vector d_concat = layer.weight.transpose() * d_pre;
      d_prev.row(v) += d_concat.head(in).transpose();
      const Vector d_nb = d_concat.tail(in);
      if (cache.sampled.empty()) continue;

      if (params.kind == AggregatorKind::Mean) {
        const double inv = 1.0 / static_cast<double>(cache.sampled.size());
        for (std::size_t u : cache.sampled) d_prev.row(static_cast<Eigen::Index>(u)) += inv * d_nb.transpose();
        continue;
      }

      const Vector& nb = cache.neighborhood;
      const Vector d_q = d_nb.cwiseProduct(nb.cwiseProduct(Vector::Ones(nb.size()) - nb));
      g.agg_weight += d_q * cache.steps.back().h.transpose();
      g.agg_bias += d_q;
      Vector d_h = layer.agg_weight.transpose() * d_q;
      Vector d_c = Vector::Zero(hd);
      for (std::size_t t = cache.steps.size(); t-- > 0;) {
        const auto& st = cache.steps[t];
        const Vector c_prev = t > 0 ? cache.steps[t - 1].c : Vector::Zero(hd);
        const Vector h_prev = t > 0 ? cache.steps[t - 1].h : Vector::Zero(hd);
        const auto gi = st.gates.segment(0, hd);
        const auto gf = st.gates.segment(hd, hd);
        const auto gg = st.gates.segment(2 * hd, hd);
        const auto go = st.gates.segment(3 * hd, hd);
        const Vector tanh_c = st.c.unaryExpr([](double x) { return std::tanh(x); });
        const Vector d_o = d_h.cwiseProduct(tanh_c);
        const Vector dc = d_c + d_h.cwiseProduct(go).cwiseProduct(Vector::Ones(hd) - tanh_c.cwiseAbs2());
        Vector d_a(4 * hd);
        d_a.segment(0, hd) = dc.cwiseProduct(gg).cwiseProduct(gi.cwiseProduct(Vector::Ones(hd) - gi));
        d_a.segment(hd, hd) = dc.cwiseProduct(c_prev).cwiseProduct(gf.cwiseProduct(Vector::Ones(hd) - gf));
        d_a.segment(2 * hd, hd) = dc.cwiseProduct(gi).cwiseProduct(Vector::Ones(hd) - gg.cwiseAbs2());
        d_a.segment(3 * hd, hd) = d_o.cwiseProduct(go.cwiseProduct(Vector::Ones(hd) - go));
        const auto x_row = prev.row(static_cast<Eigen::Index>(cache.sampled[t]));
        g.lstm.w_input += d_a * x_row;
        g.lstm.w_hidden += d_a * h_prev.transpose();
        g.lstm.bias += d_a;
        d_prev.row(static_cast<Eigen::Index>(cache.sampled[t])) += (layer.lstm.w_input.transpose() * d_a).transpose();
        d_h = layer.lstm.w_hidden.transpose() * d_a;
        d_c = dc.cwiseProduct(gf);
      }
    }
    d_states = std::move(d_prev);
  }
  return grad;
}

double graph_loss(const Vector& z_u, const Vector& z_v, std::span<const Vector> negatives, std::size_t q) {
  require(z_u.size() == z_v.size(), ErrorCode::DimensionMismatch, "z_u and z_v differ in dimension");
  double loss = -log_sigmoid(z_u.dot(z_v));
  if (q == 0) return loss;
  require(!negatives.empty(), ErrorCode::DimensionMismatch, "Q > 0 requires at least one negative");
  double mean = 0.0;
  for (const Vector& zn : negatives) {
    require(zn.size() == z_u.size(), ErrorCode::DimensionMismatch, "negative has wrong dimension");
    mean += log_sigmoid(-z_u.dot(zn));
  }
  mean /= static_cast<double>(negatives.size());
  return loss - static_cast<double>(q) * mean;
}

GraphLossGradient graph_loss_gradient(const Vector& z_u, const Vector& z_v, std::span<const Vector> negatives,
                                      std::size_t q) {
  require(z_u.size() == z_v.size(), ErrorCode::DimensionMismatch, "z_u and z_v differ in dimension");
  GraphLossGradient g;
  const double d_pos = sigmoid(z_u.dot(z_v)) - 1.0;
  g.d_u = d_pos * z_v;
  g.d_v = d_pos * z_u;
  if (q == 0) return g;
  require(!negatives.empty(), ErrorCode::DimensionMismatch, "Q > 0 requires at least one negative");
  const double w = static_cast<double>(q) / static_cast<double>(negatives.size());
  for (const Vector& zn : negatives) {
    const double d_neg = w * sigmoid(z_u.dot(zn));
    g.d_u += d_neg * zn;
    g.d_negatives.push_back(d_neg * z_u);
  }
  return g;
}

FreTrainingResult train_fre(const FeatureMatrix& features, const GraphContext& graph, AggregatorParams params,
                            const GraphLossConfig& cfg, std::span<const std::size_t> fanouts, std::size_t epochs,
                            double learning_rate) {
  require(graph.nodes > 0 && graph.edge_count() > 0, ErrorCode::EmptyGraph, "graph has no edges to walk");
  require(learning_rate >= 0.0, ErrorCode::ConfigInvalid, "learning rate must be non-negative");
  require(cfg.walk_length >= 1, ErrorCode::ConfigInvalid, "walk_length must be >= 1");
  const std::size_t n = graph.nodes;
  FreTrainingResult result;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    // Positive pairs from random walks.
    Rng walk_rng(derive_seed(cfg.seed, "walks", epoch));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t u = 0; u < n; ++u) {
      if (graph.neighbor_lists[u].empty()) continue;
      for (std::size_t w = 0; w < cfg.walks_per_node; ++w) {
        std::size_t cur = u;
        for (std::size_t step = 0; step < cfg.walk_length; ++step) {
          const auto& nl = graph.neighbor_lists[cur];
          cur = nl[uniform_index(walk_rng, nl.size())];
          if (cur != u) pairs.emplace_back(u, cur);
        }
      }
    }
    if (pairs.empty()) break;

    Rng neg_rng(derive_seed(cfg.seed, "negatives", epoch));
    std::vector<std::vector<std::size_t>> negatives(pairs.size());
    if (cfg.negatives > 0 && n > 2) {
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        while (negatives[p].size() < cfg.negatives) {
          const auto cand = static_cast<std::size_t>(uniform_index(neg_rng, n));
          if (cand != pairs[p].first && cand != pairs[p].second) negatives[p].push_back(cand);
        }
      }
    }

    const FreForward fw = fre_forward(features, graph, params, fanouts, derive_seed(cfg.seed, "epoch", epoch));
    const Matrix& z = fw.embeddings();
    Matrix d_z = Matrix::Zero(z.rows(), z.cols());
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [u, v] = pairs[p];
      const Vector zu = z.row(static_cast<Eigen::Index>(u)).transpose();
      const Vector zv = z.row(static_cast<Eigen::Index>(v)).transpose();
      std::vector<Vector> zn;
      for (std::size_t m : negatives[p]) zn.push_back(z.row(static_cast<Eigen::Index>(m)).transpose());
      const std::size_t q = zn.empty() ? 0 : cfg.negatives;
      total += graph_loss(zu, zv, zn, q);
      const auto g = graph_loss_gradient(zu, zv, zn, q);
      d_z.row(static_cast<Eigen::Index>(u)) += scale * g.d_u.transpose();
      d_z.row(static_cast<Eigen::Index>(v)) += scale * g.d_v.transpose();
      for (std::size_t i = 0; i < zn.size(); ++i) {
        d_z.row(static_cast<Eigen::Index>(negatives[p][i])) += scale * g.d_negatives[i].transpose();
      }
    }
    result.epoch_losses.push_back(total * scale);
    if (learning_rate > 0.0) {
      const AggregatorParams grad = fre_backward(fw, params, d_z);
      params.axpy(-learning_rate, grad);
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace gcm

#include "gcm/icim.hpp"

#include "gcm/error.hpp"

namespace gcm {

Matrix attention_scores(const Matrix& queries, const Matrix& keys, Eigen::Index d_k) {
  require(queries.cols() == d_k && keys.cols() == d_k, ErrorCode::DimensionMismatch,
          "queries and keys must both have d_k columns");
  require(d_k >= 1, ErrorCode::DimensionMismatch, "d_k must be positive");
  return softmax_rows(queries * keys.transpose() / std::sqrt(static_cast<double>(d_k)));
}

AttentionArtifacts pairwise_attention(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), ErrorCode::DimensionMismatch,
          "pairwise attention needs equal u x d inputs");
  AttentionArtifacts a;
  a.m1 = x * y.transpose();
  a.m2 = a.m1.transpose();
  a.n1 = softmax_rows(a.m1);
  a.n2 = softmax_rows(a.m2);
  a.y1 = a.n1 * y;
  a.y2 = a.n2 * x;
  a.a1 = a.y1.cwiseProduct(x);
  a.a2 = a.y2.cwiseProduct(y);
  return a;
}

Matrix fuse_enriched(const Matrix& text, const Matrix& audio, const Matrix& visual) {
  require(text.rows() == audio.rows() && text.rows() == visual.rows() && text.cols() == audio.cols() &&
              text.cols() == visual.cols(),
          ErrorCode::DimensionMismatch, "modalities must share the same u x d shape");
  const Eigen::Index d = text.cols();
  const AttentionArtifacts av = pairwise_attention(audio, visual);
  const AttentionArtifacts ta = pairwise_attention(text, audio);
  const AttentionArtifacts vt = pairwise_attention(visual, text);
  Matrix h(text.rows(), 9 * d);
  h << text, audio, visual, av.a1, av.a2, ta.a1, ta.a2, vt.a1, vt.a2;
  return h;
}

}  // namespace gcm

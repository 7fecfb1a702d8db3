#pragma once

#include "gcm/data.hpp"
#include "gcm/linalg.hpp"

namespace gcm {

/// softmax over each row of R K^T / sqrt(d_k).
Matrix attention_scores(const Matrix& queries, const Matrix& keys, Eigen::Index d_k);

struct AttentionArtifacts {
  Matrix m1, m2;  // matching matrices, u x u
  Matrix n1, n2;  // row-softmax of m1, m2
  Matrix y1, y2;  // attentive representations, u x d
  Matrix a1, a2;  // gated matrices, u x d
};

/// M1 = X Y^T, M2 = Y X^T, N = row-softmax(M), Y1 = N1 Y, Y2 = N2 X,
/// A1 = Y1 (.) X, A2 = Y2 (.) Y. Parameter-free; no 1/sqrt(d) scaling.
AttentionArtifacts pairwise_attention(const Matrix& x, const Matrix& y);

/// [text | audio | visual | A1(a,v) | A2(a,v) | A1(t,a) | A2(t,a) | A1(v,t) | A2(v,t)], u x 9d.
Matrix fuse_enriched(const Matrix& text, const Matrix& audio, const Matrix& visual);

inline FeatureMatrix fuse_enriched(const FeatureMatrix& text, const FeatureMatrix& audio, const FeatureMatrix& visual) {
  return FeatureMatrix(fuse_enriched(text.values(), audio.values(), visual.values()));
}

}  // namespace gcm

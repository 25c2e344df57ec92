#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "blindemod/core.hpp"

namespace blindemod {

/// Bias-free expansive ReLU generator. layers[i] has shape dims[i+1] x dims[i]
/// with dims strictly increasing. Immutable after construction; all operations
/// on it are pure, so shared networks are safe to use from many threads.
struct GeneratorNetwork {
  std::vector<Matrix> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  int latent_dim() const { return static_cast<int>(layers.front().cols()); }
  int output_dim() const { return static_cast<int>(layers.back().rows()); }

  std::vector<int> dims() const {
    std::vector<int> d{latent_dim()};
    for (const Matrix& W : layers) d.push_back(static_cast<int>(W.rows()));
    return d;
  }

  void validate() const {
    require(!layers.empty(), "network needs at least one layer");
    int prev = latent_dim();
    for (const Matrix& W : layers) {
      require(W.cols() == prev, "layer shapes must chain");
      require(W.rows() > W.cols(), "network must be expansive");
      require(W.allFinite(), "weights must be finite");
      prev = static_cast<int>(W.rows());
    }
  }
};

/// relu(W_d ... relu(W_1 z) ...); entrywise nonnegative.
inline Vector forward(const GeneratorNetwork& net, const Vector& z) {
  require(z.size() == net.latent_dim(), "latent size mismatch");
  require(z.allFinite(), "latent must be finite");
  Vector a = z;
  for (const Matrix& W : net.layers) {
    a = (W * a).cwiseMax(0.0);
  }
  return a;
}

/// Zeroes the rows of W whose inner product with h is not strictly positive.
/// A pre-activation of exactly 0 counts as inactive.
inline Matrix rectified_rows(const Matrix& W, const Vector& h) {
  require(W.cols() == h.size(), "shape mismatch");
  Vector pre = W * h;
  Matrix out = W;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!(pre[i] > 0.0)) out.row(i).setZero();
  }
  return out;
}

/// Per-layer activation pattern at a point. masks[i][r] is 1 when row r of
/// layer i is active in the cascaded pre-activation, else 0.
struct MaskStack {
  std::vector<Vector> masks;
};

/// Forward pass that also records the activation pattern.
inline std::pair<Vector, MaskStack> forward_with_masks(const GeneratorNetwork& net,
                                                       const Vector& z) {
  require(z.size() == net.latent_dim(), "latent size mismatch");
  MaskStack st;
  st.masks.reserve(net.layers.size());
  Vector a = z;
  for (const Matrix& W : net.layers) {
    Vector pre = W * a;
    Vector mask = (pre.array() > 0.0).cast<double>();
    a = pre.cwiseProduct(mask);
    st.masks.push_back(std::move(mask));
  }
  return {std::move(a), std::move(st)};
}

inline MaskStack masks_at(const GeneratorNetwork& net, const Vector& z) {
  return forward_with_masks(net, z).second;
}

/// Lambda v for the masked linearization described by st.
inline Vector apply_cascade(const GeneratorNetwork& net, const MaskStack& st,
                            const Vector& v) {
  Vector a = v;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    a = (net.layers[i] * a).cwiseProduct(st.masks[i]);
  }
  return a;
}

/// Lambda^T u.
inline Vector apply_cascade_transpose(const GeneratorNetwork& net, const MaskStack& st,
                                      const Vector& u) {
  Vector a = u;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    a = net.layers[i].transpose() * a.cwiseProduct(st.masks[i]);
  }
  return a;
}

/// Masked-cascade product Lambda_{d,+,h} = prod_i W_{i,+,h} with the masks of
/// layer i taken from the cascaded pre-activation at layer i.
struct ActivationCascade {
  std::vector<Vector> masks;
  Matrix effective_matrix;  // output_dim x latent_dim
  Vector output;            // effective_matrix * h == forward(net, h)
};

inline ActivationCascade cascade(const GeneratorNetwork& net, const Vector& h) {
  auto [out, st] = forward_with_masks(net, h);
  Matrix eff;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Matrix masked = i == 0 ? Matrix(net.layers[0]) : Matrix(net.layers[i] * eff);
    for (Eigen::Index r = 0; r < masked.rows(); ++r) {
      if (st.masks[i][r] == 0.0) masked.row(r).setZero();
    }
    eff = std::move(masked);
  }
  return {std::move(st.masks), std::move(eff), std::move(out)};
}

/// Layer i entries i.i.d. N(0, 1/dims[i]); deterministic for a fixed seed.
inline GeneratorNetwork sample_gaussian_network(const std::vector<int>& dims,
                                                std::uint64_t seed) {
  require(dims.size() >= 2, "need at least one layer");
  for (std::size_t i = 1; i < dims.size(); ++i) {
    require(dims[i] > dims[i - 1], "dims must be strictly increasing");
  }
  GeneratorNetwork net;
  Rng rng(seed);
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    Matrix W(dims[i], dims[i - 1]);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = sd * rng.gaussian();
    }
    net.layers.push_back(std::move(W));
  }
  return net;
}

/// Rows i.i.d. N(0, (1/rows) I_cols), replaced by the zero row when the norm
/// exceeds 3 sqrt(cols/rows).
inline Matrix sample_truncated_last_layer(int rows, int cols, std::uint64_t seed) {
  require(rows >= cols, "rows must be at least cols");
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  const double radius = 3.0 * std::sqrt(static_cast<double>(cols) / rows);
  Matrix W(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) W(r, c) = sd * rng.gaussian();
    if (W.row(r).norm() > radius) W.row(r).setZero();
  }
  return W;
}

enum class LastLayerRule { kGaussian, kTruncatedLast };

/// Samples a network with Gaussian inner layers and, when requested, a
/// truncated-Gaussian last layer. Seeds are derived per layer from `seed`.
inline GeneratorNetwork sample_network(const std::vector<int>& dims, std::uint64_t seed,
                                       LastLayerRule rule) {
  GeneratorNetwork net = sample_gaussian_network(dims, seed);
  if (rule == LastLayerRule::kTruncatedLast) {
    const std::size_t last = net.layers.size() - 1;
    net.layers[last] = sample_truncated_last_layer(
        dims[last + 1], dims[last], mix_seed(seed, 0x7472756e63ULL));
  }
  return net;
}

}  // namespace blindemod

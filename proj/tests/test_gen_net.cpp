#include <catch2/catch_amalgamated.hpp>

#include "blindemod/gen_net.hpp"

using namespace blindemod;

namespace {

// Straight-line re-implementation of the two multiply-then-clamp steps,
// independent of the library's forward path.
Vector naive_forward(const std::vector<Matrix>& layers, const Vector& z) {
  Vector a = z;
  for (const Matrix& W : layers) {
    Vector next(W.rows());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * a[c];
      next[r] = acc > 0.0 ? acc : 0.0;
    }
    a = next;
  }
  return a;
}

GeneratorNetwork tiny_net(std::initializer_list<Matrix> layers) {
  GeneratorNetwork net;
  for (const Matrix& W : layers) net.layers.push_back(W);
  return net;
}

}  // namespace

TEST_CASE("forward applies relu layer by layer") {
  Matrix W(2, 2);
  W << 1, 0, 0, -1;
  const auto net = tiny_net({W});
  Vector z(2);
  z << 1, 1;
  const Vector out = forward(net, z);
  REQUIRE(out[0] == 1.0);
  REQUIRE(out[1] == 0.0);
}

TEST_CASE("forward of zero latent is the zero vector") {
  const auto net = sample_gaussian_network({3, 7, 15}, 5);
  REQUIRE(forward(net, Vector::Zero(3)).isZero(0.0));
}

TEST_CASE("forward matches a naive reimplementation") {
  const auto net = sample_gaussian_network({4, 9, 21}, 17);
  Rng rng(99);
  for (int i = 0; i < 10; ++i) {
    const Vector z = rng.gaussian_vector(4);
    const Vector a = forward(net, z);
    const Vector b = naive_forward(net.layers, z);
    REQUIRE((a - b).norm() <= 1e-14 * (1.0 + b.norm()));
  }
}

TEST_CASE("forward rejects mismatched latent size") {
  const auto net = sample_gaussian_network({3, 7}, 1);
  REQUIRE_THROWS_AS(forward(net, Vector::Zero(4)), std::invalid_argument);
}

TEST_CASE("rectified_rows zeroes inactive rows, strict at zero") {
  Matrix W(2, 2);
  W << 1, 0, 0, -1;
  Vector h(2);
  h << 1, 1;
  const Matrix R = rectified_rows(W, h);
  REQUIRE(R(0, 0) == 1.0);
  REQUIRE(R(1, 1) == 0.0);

  // Row with exactly zero pre-activation counts as inactive.
  Matrix Z(1, 2);
  Z << 1, -1;
  REQUIRE(rectified_rows(Z, h).isZero(0.0));
}

TEST_CASE("rectified_rows is the identity when all rows are active") {
  Rng rng(3);
  Matrix W(6, 3);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 3; ++c) W(r, c) = std::abs(rng.gaussian());
  Vector h(3);
  h << 1, 2, 3;
  REQUIRE(rectified_rows(W, h) == W);
}

TEST_CASE("rectified_rows matches a per-row mask oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix W(8, 5);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 5; ++c) W(r, c) = rng.gaussian();
    const Vector h = rng.gaussian_vector(5);
    const Matrix R = rectified_rows(W, h);
    for (int r = 0; r < 8; ++r) {
      double pre = 0.0;
      for (int c = 0; c < 5; ++c) pre += W(r, c) * h[c];
      for (int c = 0; c < 5; ++c) {
        REQUIRE(R(r, c) == (pre > 0.0 ? W(r, c) : 0.0));
      }
    }
  }
}

TEST_CASE("cascade with all pre-activations positive is the plain product") {
  Rng rng(5);
  Matrix W1(4, 2), W2(7, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c) W1(r, c) = std::abs(rng.gaussian());
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 4; ++c) W2(r, c) = std::abs(rng.gaussian());
  const auto net = tiny_net({W1, W2});
  Vector h(2);
  h << 1, 2;
  const ActivationCascade cas = cascade(net, h);
  REQUIRE((cas.effective_matrix - W2 * W1).norm() <= 1e-12 * (W2 * W1).norm());
}

TEST_CASE("single-layer cascade equals rectified_rows") {
  Rng rng(6);
  Matrix W(9, 4);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 4; ++c) W(r, c) = rng.gaussian();
  const Vector h = rng.gaussian_vector(4);
  const ActivationCascade cas = cascade(tiny_net({W}), h);
  REQUIRE(cas.effective_matrix == rectified_rows(W, h));
}

TEST_CASE("cascade output reproduces forward") {
  const auto net = sample_gaussian_network({4, 10, 22, 45}, 21);
  Rng rng(7);
  for (int i = 0; i < 5; ++i) {
    const Vector h = rng.gaussian_vector(4);
    const ActivationCascade cas = cascade(net, h);
    const Vector f = forward(net, h);
    REQUIRE(cas.effective_matrix.rows() == 45);
    REQUIRE(cas.effective_matrix.cols() == 4);
    REQUIRE((cas.output - f).norm() <= 1e-12 * (1.0 + f.norm()));
    REQUIRE((Vector(cas.effective_matrix * h) - f).norm() <= 1e-12 * (1.0 + f.norm()));
  }
}

TEST_CASE("sample_gaussian_network entry variance tracks 1/rows") {
  const auto net = sample_gaussian_network({10, 250}, 42);
  const Matrix& W = net.layers[0];
  const double mean = W.mean();
  const double var = (W.array() - mean).square().sum() / (W.size() - 1);
  REQUIRE(var == Catch::Approx(1.0 / 250).epsilon(0.20));
}

TEST_CASE("sample_gaussian_network is deterministic in the seed") {
  const auto a = sample_gaussian_network({5, 11, 23}, 1234);
  const auto b = sample_gaussian_network({5, 11, 23}, 1234);
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    REQUIRE(a.layers[i] == b.layers[i]);
  }
}

TEST_CASE("sample_gaussian_network rejects non-increasing dims") {
  REQUIRE_THROWS_AS(sample_gaussian_network({10, 5}, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(sample_gaussian_network({10, 10}, 1), std::invalid_argument);
}

TEST_CASE("truncated last layer: surviving rows stay inside the radius") {
  const Matrix W = sample_truncated_last_layer(1000, 10, 7);
  const double radius = 3.0 * std::sqrt(10.0 / 1000.0);
  int zeroed = 0;
  for (int r = 0; r < 1000; ++r) {
    const double n = W.row(r).norm();
    if (n == 0.0) {
      ++zeroed;
    } else {
      REQUIRE(n <= radius);
    }
  }
  // The radius-crossing event is rare; with these sizes typically none occur.
  REQUIRE(zeroed <= 1);
}

TEST_CASE("truncated last layer zeroes a tiny fraction of rows") {
  // 1e5 rows at k=10: P(chi^2_10 > 90) is ~1e-13, so the count stays below 1e-3.
  const Matrix W = sample_truncated_last_layer(100000, 10, 11);
  int zeroed = 0;
  for (int r = 0; r < W.rows(); ++r) {
    if (W.row(r).isZero(0.0)) ++zeroed;
  }
  REQUIRE(zeroed < 100);
}

TEST_CASE("truncated last layer is deterministic in the seed") {
  REQUIRE(sample_truncated_last_layer(50, 5, 9) == sample_truncated_last_layer(50, 5, 9));
  REQUIRE_THROWS_AS(sample_truncated_last_layer(4, 5, 9), std::invalid_argument);
}

TEST_CASE("forward is positively homogeneous") {
  const auto net = sample_gaussian_network({5, 12, 26}, 33);
  Rng rng(8);
  for (double c : {0.5, 2.0, 10.0}) {
    const Vector h = rng.gaussian_vector(5);
    const Vector a = forward(net, c * h);
    const Vector b = c * forward(net, h);
    REQUIRE((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
  }
}

TEST_CASE("cascade masks are invariant under positive scaling") {
  const auto net = sample_gaussian_network({5, 12, 26}, 34);
  Rng rng(9);
  const Vector h = rng.gaussian_vector(5);
  const MaskStack a = masks_at(net, h);
  const MaskStack b = masks_at(net, 7.5 * h);
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    REQUIRE(a.masks[i] == b.masks[i]);
  }
}

TEST_CASE("wide Gaussian nets are 1/2-isometries per layer") {
  // |G(h)|^2 * 2^d / |h|^2 stays within 25% of 1 for dims (10, 500, 5000).
  for (int seed = 0; seed < 20; ++seed) {
    const auto net =
        sample_gaussian_network({10, 500, 5000}, mix_seed(2024, seed));
    Rng rng(mix_seed(4048, seed));
    const Vector h = rng.gaussian_vector(10);
    const double ratio = forward(net, h).squaredNorm() * 4.0 / h.squaredNorm();
    REQUIRE(std::abs(ratio - 1.0) <= 0.25);
  }
}

TEST_CASE("sample_network with truncated rule replaces only the last layer") {
  const auto g = sample_gaussian_network({5, 11, 23}, 77);
  const auto t = sample_network({5, 11, 23}, 77, LastLayerRule::kTruncatedLast);
  REQUIRE(t.layers[0] == g.layers[0]);
  REQUIRE(t.layers[1] != g.layers[1]);
  const double radius = 3.0 * std::sqrt(11.0 / 23.0);
  for (int r = 0; r < 23; ++r) {
    REQUIRE(t.layers[1].row(r).norm() <= radius + 1e-15);
  }
}

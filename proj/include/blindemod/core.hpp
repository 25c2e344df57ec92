#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace blindemod {

// Weight matrices are dense row-major doubles; vectors are plain Eigen columns.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// splitmix64 step, used to derive independent per-stream seeds from one base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seedable portable generator: mt19937_64 for bits, Box-Muller for normals.
/// Both steps are fully specified, so streams reproduce across platforms and
/// standard libraries (std::normal_distribution would not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // 1 - u in (0, 1] keeps the log finite.
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double t = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  Vector gaussian_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  /// Uniform direction on the unit sphere in R^n.
  Vector unit_vector(int n) {
    for (;;) {
      Vector v = gaussian_vector(n);
      const double nrm = v.norm();
      if (nrm > 1e-12) return v / nrm;
    }
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace blindemod

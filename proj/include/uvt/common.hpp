#pragma once

// Shared scalar/matrix typedefs, deterministic RNG helpers and small math
// utilities used across the library.

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace uvt {

// Row-major everywhere: rows are tokens, columns are feature channels.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

// Production scalar type. Gradient checks instantiate the templates with
// double instead.
using real = float;

// ---------------------------------------------------------------------------
// RNG
//
// All randomness in the project flows through explicitly seeded mt19937_64
// streams. Derived seeds are produced with splitmix64 so that independent
// streams (per sample, per step) never share state.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t seed_combine(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2)));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(splitmix64(seed)); }

// Uniform integer in [lo, hi], inclusive.
inline int rng_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double rng_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// k distinct values from [0, n), uniform without replacement.
// Partial Fisher-Yates; output order is the sampling order.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: k out of range");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    int j = rng_int(rng, i, n - 1);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Math helpers
// ---------------------------------------------------------------------------

template <class S>
inline S gelu(S x) {
  // Exact erf-based GeLU: x * Phi(x).
  return x * S(0.5) * (S(1) + std::erf(x / S(std::sqrt(2.0))));
}

template <class S>
inline S gelu_grad(S x) {
  const S phi = std::exp(-x * x / S(2)) / S(std::sqrt(2.0 * M_PI));
  const S Phi = S(0.5) * (S(1) + std::erf(x / S(std::sqrt(2.0))));
  return Phi + x * phi;
}

// Numerically stable in-place softmax over each row.
template <class S>
inline void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// FNV-1a over raw bytes; used for content hashes of parameter blobs.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// Exceptions must not escape OpenMP regions; loop bodies run through this
// collector and the first captured error is rethrown after the join.
class ParallelErrors {
 public:
  template <class F>
  void run(F&& body) noexcept {
    try {
      body();
    } catch (const std::exception& e) {
      record(e.what());
    } catch (...) {
      record("unknown error");
    }
  }
  void rethrow() const {
    if (failed_) throw std::runtime_error(message_);
  }

 private:
  void record(const char* what) {
#pragma omp critical(uvt_parallel_errors)
    {
      if (!failed_) {
        failed_ = true;
        message_ = what;
      }
    }
  }
  bool failed_ = false;
  std::string message_;
};

}  // namespace uvt

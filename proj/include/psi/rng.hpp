#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace psi {

// Deterministic splitmix64 generator. The full generator state is a single
// u64, which makes checkpoint round-trips exact: save state(), restore with
// set_state(), and the stream continues bit-identically.
class Rng {
public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Rejection-free modulo bias is irrelevant at these
  // ranges (n << 2^64) but use the widening-multiply trick anyway.
  uint64_t uniform_u64(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  uint32_t uniform_u32(uint32_t n) { return static_cast<uint32_t>(uniform_u64(n)); }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_u64(
                    static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one output per call. The sibling draw is discarded so the
  // generator state stays a pure function of call count.
  double normal() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  float normal_f32() { return static_cast<float>(normal()); }

  // Weighted index draw; weights need not be normalized.
  size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_u64(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Deterministic child stream; used to give parallel workers independent
  // sequences without sharing mutable state.
  Rng fork(uint64_t stream) const {
    Rng child(state_ ^ (0x632be59bd9b4e019ull * (stream + 1)));
    child.next_u64();
    return child;
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

private:
  uint64_t state_;
};

}  // namespace psi

#pragma once

#include <cstdint>
#include <span>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace cflow {

using Rng = boost::random::mt19937_64;

/// One step of the splitmix64 generator; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seed for sub-stream `stream` of `master`:
///   s = master + (stream + 1) * 0x9E3779B97F4A7C15; return splitmix64(s).
/// Used to fan out per-grid-point and per-purpose seeds reproducibly.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

/// Standard normal draws (ziggurat) on top of a 64-bit Mersenne twister.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() { return dist_(rng_); }

  void fill(std::span<double> out) {
    for (double& x : out) x = dist_(rng_);
  }

  Rng& engine() noexcept { return rng_; }

 private:
  Rng rng_;
  boost::random::normal_distribution<double> dist_;
};

}  // namespace cflow

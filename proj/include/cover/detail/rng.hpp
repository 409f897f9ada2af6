#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cover::detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Bounded draw by multiply-shift on the full 64-bit output. Hand-rolled
// (like the shuffle and the gaussian below) because the stdlib bounded
// distributions are implementation-defined and artifacts must be
// byte-identical across standard libraries.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t x = rng();
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(x) * static_cast<unsigned __int128>(n)) >> 64);
}

template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed, std::uint64_t salt) {
  std::mt19937_64 rng(mix64(seed) ^ mix64(salt ^ 0xa5a5a5a5a5a5a5a5ull));
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Box-Muller pair; deterministic given the engine state.
inline void gaussian_pair(std::mt19937_64& rng, double& z0, double& z1) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  z0 = r * std::cos(two_pi * u2);
  z1 = r * std::sin(two_pi * u2);
}

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i + 1 < n; i += 2) gaussian_pair(rng, out[i], out[i + 1]);
  if (n % 2 == 1) {
    double z0 = 0.0, z1 = 0.0;
    gaussian_pair(rng, z0, z1);
    out[n - 1] = z0;
  }
  return out;
}

}  // namespace cover::detail

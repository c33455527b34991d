#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace supertrim {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The output
/// block for counter c under key k is a pure function of (k, c), so any
/// stream can be regenerated independently of the order replicas run in.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(Key key, std::uint32_t stream_lo, std::uint32_t stream_hi)
      : key_(key), stream_lo_(stream_lo), stream_hi_(stream_hi) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (index_ == kBufferWords) refill();
    return buffer_[index_++];
  }

  /// Two consecutive words, high word first.
  std::uint64_t next_u64() {
    if (index_ + 2 > kBufferWords) {
      const std::uint64_t hi = (*this)();
      return (hi << 32) | (*this)();
    }
    const std::uint64_t v = (std::uint64_t{buffer_[index_]} << 32) | buffer_[index_ + 1];
    index_ += 2;
    return v;
  }

  static Counter block(Counter c, Key k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

 private:
  static constexpr int kLanes = 8;
  static constexpr int kBufferWords = 4 * kLanes;

  // Same output as kLanes consecutive calls to block().
  static void blocks(std::uint64_t counter, std::uint32_t s0, std::uint32_t s1, std::uint32_t k0, std::uint32_t k1,
                     std::uint32_t* out) {
#if defined(__SSE2__)
    // Four blocks per vector; _mm_mul_epu32 multiplies the even lanes, so the
    // odd lanes are shifted down and the halves recombined.
    constexpr int kGroups = kLanes / 4;
    __m128i c0[kGroups], c1[kGroups], c2[kGroups], c3[kGroups];
    for (int g = 0; g < kGroups; ++g) {
      alignas(16) std::uint32_t lo[4], hi[4];
      for (int l = 0; l < 4; ++l) {
        const std::uint64_t ctr = counter + static_cast<std::uint64_t>(4 * g + l);
        lo[l] = static_cast<std::uint32_t>(ctr);
        hi[l] = static_cast<std::uint32_t>(ctr >> 32);
      }
      c0[g] = _mm_load_si128(reinterpret_cast<const __m128i*>(lo));
      c1[g] = _mm_load_si128(reinterpret_cast<const __m128i*>(hi));
      c2[g] = _mm_set1_epi32(static_cast<int>(s0));
      c3[g] = _mm_set1_epi32(static_cast<int>(s1));
    }
    const __m128i m0 = _mm_set1_epi32(static_cast<int>(0xD2511F53u));
    const __m128i m1 = _mm_set1_epi32(static_cast<int>(0xCD9E8D57u));
    const __m128i even = _mm_set_epi32(0, -1, 0, -1);
    for (int round = 0; round < 10; ++round) {
      const __m128i vk0 = _mm_set1_epi32(static_cast<int>(k0));
      const __m128i vk1 = _mm_set1_epi32(static_cast<int>(k1));
      for (int g = 0; g < kGroups; ++g) {
        const __m128i pe0 = _mm_mul_epu32(c0[g], m0);
        const __m128i po0 = _mm_mul_epu32(_mm_srli_epi64(c0[g], 32), m0);
        const __m128i pe1 = _mm_mul_epu32(c2[g], m1);
        const __m128i po1 = _mm_mul_epu32(_mm_srli_epi64(c2[g], 32), m1);
        const __m128i lo0 = _mm_or_si128(_mm_and_si128(pe0, even), _mm_slli_epi64(po0, 32));
        const __m128i hi0 = _mm_or_si128(_mm_srli_epi64(pe0, 32), _mm_andnot_si128(even, po0));
        const __m128i lo1 = _mm_or_si128(_mm_and_si128(pe1, even), _mm_slli_epi64(po1, 32));
        const __m128i hi1 = _mm_or_si128(_mm_srli_epi64(pe1, 32), _mm_andnot_si128(even, po1));
        c0[g] = _mm_xor_si128(_mm_xor_si128(hi1, c1[g]), vk0);
        c1[g] = lo1;
        c2[g] = _mm_xor_si128(_mm_xor_si128(hi0, c3[g]), vk1);
        c3[g] = lo0;
      }
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    for (int g = 0; g < kGroups; ++g) {
      alignas(16) std::uint32_t w[4][4];
      _mm_store_si128(reinterpret_cast<__m128i*>(w[0]), c0[g]);
      _mm_store_si128(reinterpret_cast<__m128i*>(w[1]), c1[g]);
      _mm_store_si128(reinterpret_cast<__m128i*>(w[2]), c2[g]);
      _mm_store_si128(reinterpret_cast<__m128i*>(w[3]), c3[g]);
      for (int l = 0; l < 4; ++l) {
        for (int k = 0; k < 4; ++k) out[16 * g + 4 * l + k] = w[k][l];
      }
    }
#else
    for (int l = 0; l < kLanes; ++l) {
      const auto c = block({static_cast<std::uint32_t>(counter + static_cast<std::uint64_t>(l)),
                            static_cast<std::uint32_t>((counter + static_cast<std::uint64_t>(l)) >> 32), s0, s1},
                           {k0, k1});
      for (int k = 0; k < 4; ++k) out[4 * l + k] = c[k];
    }
#endif
  }

  [[gnu::noinline]] void refill() {
    blocks(counter_, stream_lo_, stream_hi_, key_[0], key_[1], buffer_.data());
    counter_ += kLanes;
    index_ = 0;
  }

  Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, kBufferWords> buffer_{};
  int index_ = kBufferWords;
};

/// Purpose tags separate the random streams a single replica consumes.
enum class Purpose : std::uint32_t {
  kGeneral = 0,
  kInitial = 1,
  kDynamics = 2,
  kPoissonize = 3,
  kThinning = 4,
  kPath = 5,
  kTail = 6,
  kSynthetic = 7,
  kDiffusion = 8,
  kReference = 9,
  kSubsets = 10,
  kInstances = 11,
};

/// Random stream keyed by (master seed, replica index, purpose).
class RngStream {
 public:
  using result_type = std::uint32_t;

  RngStream(std::uint64_t seed, std::uint64_t replica, Purpose purpose)
      : engine_({static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
                static_cast<std::uint32_t>(replica),
                (static_cast<std::uint32_t>(purpose) << 16) ^ static_cast<std::uint32_t>(replica >> 32)) {}

  static constexpr result_type min() { return Philox4x32::min(); }
  static constexpr result_type max() { return Philox4x32::max(); }
  result_type operator()() { return engine_(); }

  std::uint64_t next_u64() { return engine_.next_u64(); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Exponential with rate 1.
  double exponential() { return -std::log(uniform()); }

  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(*this);
  }

  std::int64_t binomial(std::int64_t trials, double p) {
    if (trials <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return trials;
    return std::binomial_distribution<std::int64_t>(trials, p)(*this);
  }

  double normal() { return std::normal_distribution<double>()(*this); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  Philox4x32 engine_;
};

}  // namespace supertrim

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace vcn {

// Philox 4x32 with 10 rounds.  Counter-based: output is a pure
// function of (counter, key), so any particle or probe point can own a
// private stream addressed by id, independent of thread scheduling.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod0 = std::uint64_t(kMul0) * ctr[0];
    const std::uint64_t prod1 = std::uint64_t(kMul1) * ctr[2];
    const std::uint32_t hi0 = std::uint32_t(prod0 >> 32);
    const std::uint32_t lo0 = std::uint32_t(prod0);
    const std::uint32_t hi1 = std::uint32_t(prod1 >> 32);
    const std::uint32_t lo1 = std::uint32_t(prod1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// One logical random stream: key = master seed, counter = 64-bit block
// index concatenated with a 64-bit stream id.  Streams never collide
// and draws are reproducible regardless of thread count.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        stream_lo_(std::uint32_t(stream_id)),
        stream_hi_(std::uint32_t(stream_id >> 32)) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; draws come in pairs and the spare
  // is cached, so consumption per stream stays deterministic.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 1 - uniform() lies in (0, 1], keeping the log finite.
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double theta = 6.283185307179586476925286766559 * uniform();
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  void refill() {
    buf_ = philox4x32({std::uint32_t(block_), std::uint32_t(block_ >> 32),
                       stream_lo_, stream_hi_},
                      key_);
    ++block_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// 48-bit FNV-1a style hash of a quantized (v, g) point, used to key
// probe-point streams by location so that shared probe points across
// runs replay identical noise.
inline std::uint64_t point_stream_hash(double v, double g) {
  const auto q = [](double x) {
    return std::uint64_t(std::int64_t(std::llround(x * 1e12)));
  };
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint64_t word : {q(v), q(g)}) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h & 0xffffffffffffull;  // 48 bits, low 16 left for the sample index
}

}  // namespace vcn

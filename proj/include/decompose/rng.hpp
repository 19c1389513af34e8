#pragma once

#include <array>
#include <cstdint>

namespace decompose {

// Counter-based generator built on Philox4x32-10. A (seed, stream) pair fully
// determines the draw sequence on every platform; the counter advances one
// 128-bit block per four 32-bit outputs, so the state is trivially copyable
// and streams can be split without coordination.
class RngHandle {
 public:
  explicit RngHandle(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via the inverse CDF (one uniform per draw).
  double normal();

  // Standard exponential, mean 1.
  double exponential();

  // Independent stream derived from this handle's identity; the derived
  // handle never collides with this one's sequence.
  RngHandle derive(std::uint64_t substream) const;

  // 32-bit words consumed so far (rejection-cost diagnostics).
  std::uint64_t words_consumed() const {
    return counter_ * 4 - static_cast<std::uint64_t>(4 - buffer_pos_);
  }

  static std::array<std::uint32_t, 4> philox4x32_10(
      const std::array<std::uint32_t, 4>& counter,
      const std::array<std::uint32_t, 2>& key);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffer_pos_ = 4;  // 4 = empty
};

}  // namespace decompose

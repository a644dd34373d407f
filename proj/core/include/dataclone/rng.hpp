#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dataclone {

// Deterministic, platform-independent PRNG (xoshiro256++ seeded via
// splitmix64). std::normal_distribution and friends are implementation
// defined, so all randomness in the pipeline goes through this class to keep
// artifacts byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01();

  // Standard normal via Box-Muller; one cached spare is kept, so draws come
  // in deterministic pairs.
  double normal();

  // Uniform integer in [0, n). n must be >= 1.
  uint64_t below(uint64_t n);

  // Derives an independent stream seed from (seed, stream, index). Used to
  // give every pipeline stage / training step / example its own substream.
  static uint64_t derive(uint64_t seed, uint64_t stream, uint64_t index = 0);
  static uint64_t derive(uint64_t seed, std::string_view stream, uint64_t index = 0);

  // Deterministic in-place Fisher-Yates shuffle of indices [0, n).
  std::vector<size_t> permutation(size_t n);

 private:
  uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a 64-bit hash, used for manifest fingerprints and checkpoint
// checksums. Not cryptographic; collision resistance is not a requirement.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64_str(const std::string& s);

}  // namespace dataclone

#pragma once

#include <array>
#include <cstdint>

#include "mvsde/common.hpp"

namespace mvsde {

using PhiloxCtr = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox 4x32, 10 rounds. Counter-based: the output is a pure function of
// (counter, key), so draws can be indexed by (replica, particle, step)
// without any sequential generator state.
PhiloxCtr philox4x32_10(PhiloxCtr ctr, PhiloxKey key);

// Standard-normal draws addressed by (replica, particle, step, component).
// Identical seeds reproduce bit-identical streams under any scheduling.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed, std::uint32_t channel = 0);

  // Fills out.size() standard normals for the addressed step. For dim == 1
  // consecutive steps share one counter block (pair index = step/2), which
  // the engine exploits with a parity cache; the mapping stays a pure
  // function of the address either way.
  void fill(std::uint32_t replica, std::uint32_t particle, std::uint32_t step,
            MutVecView out) const;

  // Both values of the dim==1 pair block covering `step` (lanes 0 and 1).
  std::array<double, 2> pair1d(std::uint32_t replica, std::uint32_t particle,
                               std::uint32_t pair_index) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  PhiloxKey key_;
  std::uint32_t channel_;
};

}  // namespace mvsde

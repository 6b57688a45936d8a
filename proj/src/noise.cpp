#include "mvsde/noise.hpp"

#include <cmath>

namespace mvsde {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(PhiloxCtr& c, const PhiloxKey& k) {
  const std::uint64_t p0 = std::uint64_t(kMul0) * c[0];
  const std::uint64_t p1 = std::uint64_t(kMul1) * c[2];
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline double uniform53(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = ((std::uint64_t(a) << 32) | b) >> 11;
  return double(bits) * (1.0 / 9007199254740992.0);  // 2^-53
}

constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

PhiloxCtr philox4x32_10(PhiloxCtr ctr, PhiloxKey key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    round_once(ctr, key);
  }
  return ctr;
}

GaussianStream::GaussianStream(std::uint64_t seed, std::uint32_t channel)
    : seed_(seed),
      key_{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32)},
      channel_(channel) {}

namespace {
inline void box_muller(const PhiloxCtr& r, double& z0, double& z1) {
  const double u1 = 1.0 - uniform53(r[0], r[1]);  // (0, 1]
  const double u2 = uniform53(r[2], r[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  z0 = rad * std::cos(kTwoPi * u2);
  z1 = rad * std::sin(kTwoPi * u2);
}
}  // namespace

std::array<double, 2> GaussianStream::pair1d(std::uint32_t replica,
                                             std::uint32_t particle,
                                             std::uint32_t pair_index) const {
  const PhiloxCtr r = philox4x32_10(
      {pair_index, particle, replica, channel_ << 16}, key_);
  std::array<double, 2> z;
  box_muller(r, z[0], z[1]);
  return z;
}

void GaussianStream::fill(std::uint32_t replica, std::uint32_t particle,
                          std::uint32_t step, MutVecView out) const {
  const int d = int(out.size());
  if (d == 1) {
    out[0] = pair1d(replica, particle, step >> 1)[step & 1u];
    return;
  }
  for (int k = 0; 2 * k < d; ++k) {
    const PhiloxCtr r = philox4x32_10(
        {step, particle, replica, (channel_ << 16) | std::uint32_t(k)}, key_);
    double z0, z1;
    box_muller(r, z0, z1);
    out[2 * k] = z0;
    if (2 * k + 1 < d) out[2 * k + 1] = z1;
  }
}

}  // namespace mvsde

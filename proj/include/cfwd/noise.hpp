#pragma once

// Counter-based Gaussian noise: Philox4x32-10 feeding the AS241 (PPND16)
// inverse normal CDF. Every variate is a pure function of
// (seed, stream, replica, step, slot), so replicas can run on any thread in
// any order and still reproduce bit-identical paths.

#include <array>
#include <cmath>
#include <cstdint>

namespace cfwd {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

namespace detail {

inline constexpr double kPpndA[8] = {3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
                                     1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
                                     3.3430575583588128105e+4, 2.5090809287301226727e+3};
inline constexpr double kPpndB[8] = {1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2,
                                     5.3941960214247511077e+3, 2.1213794301586595867e+4, 3.9307895800092710610e+4,
                                     2.8729085735721942674e+4, 5.2264952788528545610e+3};
inline constexpr double kPpndC[8] = {1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                                     3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                                     2.27238449892691845833e-2, 7.74545014278341407640e-4};
inline constexpr double kPpndD[8] = {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
                                     6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
                                     5.47593808499534494600e-4, 1.05075007164441684324e-9};
inline constexpr double kPpndE[8] = {6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                                     2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                     2.71155556874348757815e-5, 2.01033439929228813265e-7};
inline constexpr double kPpndF[8] = {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                     1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
                                     1.42151175831644588870e-7, 2.04426310338993978564e-15};

inline double horner(const double (&c)[8], double x) noexcept {
  double r = c[7];
  for (int i = 6; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace detail

/// Standard normal quantile, Wichura's AS241 (relative accuracy about 1e-16). p must lie in (0,1).
inline double normal_quantile(double p) noexcept {
  using namespace detail;
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(kPpndA, r) / horner(kPpndB, r);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = horner(kPpndC, r) / horner(kPpndD, r);
  } else {
    r -= 5.0;
    v = horner(kPpndE, r) / horner(kPpndF, r);
  }
  return q < 0.0 ? -v : v;
}

/// Maps the top 52 of 64 random bits to the midpoints of a 2^-52 grid in (0,1).
inline constexpr double bits_to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Independent sub-streams drawn from one master seed.
enum class StreamTag : std::uint32_t { kParticles = 0, kSticky = 1, kTest = 2 };

/**
 * Deterministic Gaussian variates keyed by (seed, tag, replica, step, slot).
 * Steps are limited to 2^48, replicas to 2^32, slots to 2^32.
 */
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t replica, StreamTag tag = StreamTag::kParticles) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replica_(static_cast<std::uint32_t>(replica)),
        tag_(static_cast<std::uint32_t>(tag)) {}

  std::uint64_t bits(std::uint64_t step, std::uint32_t slot) const noexcept {
    const PhiloxCounter ctr{slot, static_cast<std::uint32_t>(step),
                            static_cast<std::uint32_t>((step >> 32) & 0xFFFFu) | (tag_ << 16), replica_};
    const auto out = philox4x32_10(ctr, key_);
    return (std::uint64_t{out[0]} << 32) | out[1];
  }

  double uniform(std::uint64_t step, std::uint32_t slot) const noexcept { return bits_to_open_unit(bits(step, slot)); }

  double gaussian(std::uint64_t step, std::uint32_t slot) const noexcept {
    return normal_quantile(uniform(step, slot));
  }

  std::uint32_t replica() const noexcept { return replica_; }

 private:
  PhiloxKey key_;
  std::uint32_t replica_;
  std::uint32_t tag_;
};

}  // namespace cfwd

#ifndef BRW_RNG_HPP
#define BRW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>

// Deterministic, stream-per-replica random numbers. Every worker owns a
// Stream keyed by (seed, stage, replica), so results never depend on the
// number of threads or on scheduling order.

namespace brw {

// Stage tags keep streams of different pipeline phases disjoint even when
// they share a seed and replica index.
enum class Stage : std::uint64_t {
  Calibrate = 0x01,
  Renewal = 0x02,
  Engine = 0x03,
  Spine = 0x04,
  Perpetuity = 0x05,
  Minimum = 0x06,
  Diagnostics = 0x07,
  Bootstrap = 0x08,
  Fit = 0x09,
  Walk = 0x0a,
  Synthetic = 0x0b,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Ziggurat tables for the standard normal (Marsaglia & Tsang layout,
// 128 layers, built once at startup).
struct ZigguratTables {
  std::uint32_t kn[128];
  double wn[128];
  double fn[128];
  ZigguratTables() {
    const double m1 = 2147483648.0;
    double dn = 3.442619855899;
    double tn = dn;
    const double vn = 9.91256303526217e-3;
    const double q = vn / std::exp(-0.5 * dn * dn);
    kn[0] = static_cast<std::uint32_t>((dn / q) * m1);
    kn[1] = 0;
    wn[0] = q / m1;
    wn[127] = dn / m1;
    fn[0] = 1.0;
    fn[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      kn[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
      tn = dn;
      fn[i] = std::exp(-0.5 * dn * dn);
      wn[i] = dn / m1;
    }
  }
};

inline const ZigguratTables& ziggurat() {
  static const ZigguratTables t;
  return t;
}

}  // namespace detail

// Counter-seeded SplitMix64 stream. Cheap to construct, no shared state.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : state_(detail::mix64(key)) {}

  Stream(std::uint64_t seed, Stage stage, std::uint64_t replica)
      : state_(detail::mix64(
            detail::mix64(seed ^ 0x6A09E667F3BCC909ULL) ^
            detail::mix64(static_cast<std::uint64_t>(stage) * 0x9E3779B97F4A7C15ULL + replica))) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1), 53-bit resolution.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log() argument.
  double u01_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return u01() < p; }

  double exponential(double rate) { return -std::log(u01_pos()) / rate; }

  // Standard normal via the 128-layer ziggurat; exact tail handling.
  double normal() {
    const auto& t = detail::ziggurat();
    for (;;) {
      const std::int32_t hz = static_cast<std::int32_t>(next_u64() >> 32);
      const std::uint32_t iz = static_cast<std::uint32_t>(hz) & 127u;
      const std::uint32_t mag =
          static_cast<std::uint32_t>(std::llabs(static_cast<std::int64_t>(hz)));
      if (mag < t.kn[iz]) return hz * t.wn[iz];

      if (iz == 0) {
        // Tail beyond r: Marsaglia's exact wedge-free recipe.
        const double r = 3.442619855899;
        double x, y;
        do {
          x = -std::log(u01_pos()) / r;
          y = -std::log(u01_pos());
        } while (y + y < x * x);
        return hz > 0 ? r + x : -(r + x);
      }
      const double x = hz * t.wn[iz];
      if (t.fn[iz] + u01() * (t.fn[iz - 1] - t.fn[iz]) <
          std::exp(-0.5 * x * x)) {
        return x;
      }
      // else: retry with fresh bits
    }
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_;
};

}  // namespace brw

#endif  // BRW_RNG_HPP

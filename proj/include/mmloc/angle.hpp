#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "mmloc/common.hpp"

namespace mmloc {

/// Binary angle: a full turn maps onto the 2^64 range of an unsigned word.
/// Addition and subtraction wrap exactly, so a common rotation cancels
/// bit-for-bit in angle differences.
class Angle {
 public:
  constexpr Angle() = default;

  static Angle from_radians(double rad) {
    double turns = rad / (2.0 * kPi);
    turns -= std::floor(turns);  // [0, 1]
    const double scaled = std::ldexp(turns, 64);
    if (!(scaled < 18446744073709551616.0)) return Angle{};
    return Angle{static_cast<std::uint64_t>(scaled)};
  }

  /// Radians in (-pi, pi].
  double radians() const {
    const auto s = static_cast<std::int64_t>(raw_);
    if (s == std::numeric_limits<std::int64_t>::min()) return kPi;
    return std::ldexp(static_cast<double>(s), -64) * (2.0 * kPi);
  }

  std::uint64_t raw() const { return raw_; }

  friend Angle operator+(Angle a, Angle b) { return Angle{a.raw_ + b.raw_}; }
  friend Angle operator-(Angle a, Angle b) { return Angle{a.raw_ - b.raw_}; }
  friend bool operator==(Angle a, Angle b) = default;

 private:
  constexpr explicit Angle(std::uint64_t raw) : raw_(raw) {}
  std::uint64_t raw_ = 0;
};

}  // namespace mmloc

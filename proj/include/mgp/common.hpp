#ifndef MGP_COMMON_HPP
#define MGP_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace mgp {

inline constexpr const char* kVersion = "0.1.0";

/* Error categories, mapped to CLI exit codes 2/3/4. */
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/* Half-open interval [lo, hi); the rightmost set of a partition level
 * additionally owns its upper endpoint. */
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x < hi; }
  bool contains_closed(double x) const { return x >= lo && x <= hi; }

  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo == b.lo && a.hi == b.hi;
  }
};

}  // namespace mgp

#endif

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace agp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// topology
struct NotStronglyConnected : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct MissingSelfLoop : Error { using Error::Error; };
struct DelayOutOfBounds : Error { using Error::Error; };
struct MissingDelayAssignment : Error { using Error::Error; };
struct NonzeroSelfDelay : Error { using Error::Error; };
struct NotColumnStochastic : Error { using Error::Error; };

// schedule
struct InfeasiblePolicy : Error { using Error::Error; };

// push-sum / optimizer
struct DimensionMismatch : Error { using Error::Error; };
struct DebiasUndefinedForRealNode : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct StepSizeExceedsBound : Error { using Error::Error; };

// objectives
struct NonFinite : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct InvalidTarget : Error { using Error::Error; };

// analysis
struct EmptyRun : Error { using Error::Error; };
struct BoundViolated : Error { using Error::Error; };

// runtime
struct Deadlock : Error { using Error::Error; };
struct QueueOverflow : Error { using Error::Error; };
struct IncompleteLog : Error { using Error::Error; };

// io / cli
struct FormatError : Error { using Error::Error; };
struct MissingArtifacts : Error { using Error::Error; };

// Small counter-based RNG. Keeps schedule/objective generation reproducible
// from a single seed without depending on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on {0, ..., bound-1}
  std::uint64_t next_below(std::uint64_t bound) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  int next_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  double next_unit() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller
  double next_gaussian() {
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace agp

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace scandiff {

// Contract violations (bad inputs, shape mismatches, invalid annotations).
// Mapped to exit code 1 by the CLI; everything else is an internal error (2).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.14159265358979323846;

// Normalize an angle to [-pi, pi). The single place modular angle
// arithmetic happens.
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Deterministic RNG: mt19937_64 plus an explicit Box-Muller transform so
// normal draws do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in [0, 1)
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  uint64_t next_u64() { return gen_(); }

  uint64_t uniform_int(uint64_t n) { return gen_() % n; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * kPi * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  float normalf() { return static_cast<float>(normal()); }

  std::string save_state() const {
    std::ostringstream os;
    os << gen_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int hs = 0;
    is >> gen_ >> hs >> spare_;
    have_spare_ = hs != 0;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream seed for object `index` derived from a master seed.
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace scandiff

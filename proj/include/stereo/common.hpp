#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stereo {

#ifdef STEREO_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

using i64 = std::int64_t;

[[noreturn]] void fail_shape(const std::string& msg);
[[noreturn]] void fail_config(const std::string& msg);
[[noreturn]] void fail_state(const std::string& msg);

// Global worker pool. Ranges are partitioned by thread count only, so a run
// is deterministic for a fixed thread count.
void set_thread_count(int n);
int thread_count();
void parallel_for(i64 n, const std::function<void(i64 begin, i64 end)>& fn);

// Fixed-order pairwise tree reduction; bit-stable regardless of thread count.
real pairwise_sum(const real* data, i64 n);
real pairwise_sum(const std::vector<real>& v);

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  real uniform(real lo, real hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return static_cast<real>(d(eng));
  }
  real normal(real mean, real stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return static_cast<real>(d(eng));
  }
  i64 uniform_int(i64 lo, i64 hi) {  // inclusive
    std::uniform_int_distribution<i64> d(lo, hi);
    return d(eng);
  }
};

}  // namespace stereo

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bilevel {

// splitmix64 finalizer; the documented 64-bit mixing primitive used for all
// seed derivation in this project.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the generator of feature column j under a given master seed.
inline std::uint64_t column_seed(std::uint64_t master_seed, std::int64_t j) {
  return mix64(mix64(master_seed) ^ static_cast<std::uint64_t>(j));
}

// Seed for trial `trial` at training-set size n within a sweep.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::int64_t n, std::int64_t trial) {
  return mix64(mix64(mix64(master_seed) ^ static_cast<std::uint64_t>(n)) ^
               static_cast<std::uint64_t>(trial));
}

// Inverse standard-normal CDF, Acklam's rational approximation refined by one
// Halley step. Pure arithmetic, so the draw stream is a deterministic
// function of the uniform stream.
inline double inverse_normal_cdf(double u) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  static constexpr double u_low = 0.02425;

  double x;
  if (u < u_low) {
    double z = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]) /
        ((((dd[0] * z + dd[1]) * z + dd[2]) * z + dd[3]) * z + 1.0);
  } else if (u <= 1.0 - u_low) {
    double z = u - 0.5;
    double z2 = z * z;
    x = (((((a[0] * z2 + a[1]) * z2 + a[2]) * z2 + a[3]) * z2 + a[4]) * z2 + a[5]) * z /
        (((((b[0] * z2 + b[1]) * z2 + b[2]) * z2 + b[3]) * z2 + b[4]) * z2 + 1.0);
  } else {
    double z = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]) /
        ((((dd[0] * z + dd[1]) * z + dd[2]) * z + dd[3]) * z + 1.0);
  }
  // One Halley refinement against the erfc-based CDF.
  static const double inv_sqrt2 = 0.7071067811865475244;
  static const double sqrt_2pi = 2.5066282746310005024;
  double e = 0.5 * std::erfc(-x * inv_sqrt2) - u;
  double g = e * sqrt_2pi * std::exp(0.5 * x * x);
  return x - g / (1.0 + 0.5 * x * g);
}

// Streams i.i.d. standard normals; one instance per feature column.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    // 53-bit uniform in (0,1), never exactly 0 or 1.
    std::uint64_t bits = engine_() >> 11;
    double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    return inverse_normal_cdf(u);
  }

  void fill(double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = next();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bilevel

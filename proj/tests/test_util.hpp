#ifndef NSDEHAZE_TEST_UTIL_HPP
#define NSDEHAZE_TEST_UTIL_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "nsdehaze/image.hpp"
#include "nsdehaze/tensor.hpp"

namespace nsd::test {

inline imaging::Image random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  imaging::Image img(h, w);
  for (double& v : img.data()) v = u(rng);
  return img;
}

inline imaging::Map random_map(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  imaging::Map m(h, w);
  for (double& v : m.data()) v = u(rng);
  return m;
}

inline ag::Tensor random_tensor(ag::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ag::Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nsdehaze_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nsd::test

#endif  // NSDEHAZE_TEST_UTIL_HPP

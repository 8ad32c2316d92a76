#ifndef NSDEHAZE_TENSOR_HPP
#define NSDEHAZE_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nsdehaze/image.hpp"

namespace nsd::ag {

/// NCHW shape. Lower-rank quantities use trailing ones (a scalar is 1x1x1x1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense double-precision NCHW array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Pointer to the (n, c) plane.
  double* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane(); }
  const double* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  double item() const;
  double sum() const;
  double abs_max() const;
  bool all_finite() const;
  void fill(double v);

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// Stacks RGB images into a (B, 3, H, W) tensor; all images must share a shape.
Tensor from_images(std::span<const imaging::Image> images);
Tensor from_image(const imaging::Image& image);
/// Extracts batch item b of a 3-channel tensor, clamping into [0,1].
imaging::Image to_image(const Tensor& t, int b = 0);
/// Extracts channel c of batch item b as a map (unclamped).
imaging::Map to_map(const Tensor& t, int b = 0, int c = 0);

}  // namespace nsd::ag

#endif  // NSDEHAZE_TENSOR_HPP

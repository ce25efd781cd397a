#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trimlab {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  std::size_t index(std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return (c * height + h) * width + w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Unconstrained real C x H x W grid (gradients, perturbations).
struct Tensor3 {
  Shape shape;
  std::vector<double> values;

  Tensor3() = default;
  explicit Tensor3(Shape s) : shape(s), values(s.size(), 0.0) {}
  Tensor3(Shape s, std::vector<double> v);

  double& at(std::size_t c, std::size_t h, std::size_t w) { return values[shape.index(c, h, w)]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[shape.index(c, h, w)];
  }
};

/// Image with intensities in [0, 1]. Shape is fixed at construction and every
/// value is checked against the box.
class ImageTensor {
 public:
  ImageTensor() = default;

  /// Constant image. Throws InvalidArgument on zero dimensions or fill outside [0, 1].
  explicit ImageTensor(Shape shape, double fill = 0.0);

  /// Throws InvalidArgument on zero dimensions, size mismatch, or values outside [0, 1].
  ImageTensor(Shape shape, std::vector<double> values);

  /// Clamps every value into [0, 1] instead of rejecting; NaN is still rejected.
  static ImageTensor clamped(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return values_.size(); }

  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return values_[shape_.index(c, h, w)];
  }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const ImageTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

double linf_distance(const ImageTensor& a, const ImageTensor& b);
double l2_distance(const ImageTensor& a, const ImageTensor& b);

}  // namespace trimlab

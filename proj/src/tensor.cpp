#include "trimlab/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "trimlab/error.hpp"

namespace trimlab {

namespace {

void check_shape(const Shape& s) {
  if (s.channels == 0 || s.height == 0 || s.width == 0)
    throw InvalidArgument("image dimensions must be strictly positive, got " + s.str());
}

}  // namespace

std::string Shape::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Tensor3::Tensor3(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
  if (values.size() != shape.size())
    throw InvalidArgument("tensor value count " + std::to_string(values.size()) +
                          " does not match shape " + shape.str());
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape) {
  check_shape(shape);
  if (!(fill >= 0.0 && fill <= 1.0)) throw InvalidArgument("image fill value outside [0, 1]");
  values_.assign(shape.size(), fill);
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  check_shape(shape);
  if (values_.size() != shape.size())
    throw InvalidArgument("image value count " + std::to_string(values_.size()) +
                          " does not match shape " + shape.str());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
      throw InvalidArgument("image value " + std::to_string(values_[i]) + " at index " +
                            std::to_string(i) + " outside [0, 1]");
  }
}

ImageTensor ImageTensor::clamped(Shape shape, std::vector<double> values) {
  for (double& v : values) {
    if (std::isnan(v)) throw InvalidArgument("image value is NaN");
    v = std::clamp(v, 0.0, 1.0);
  }
  return ImageTensor(shape, std::move(values));
}

double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("shape mismatch in linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double l2_distance(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("shape mismatch in l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace trimlab

#pragma once

// Fixed-architecture binary detector:
//
//   x (C x H x W)
//   -> conv3x3(C -> hidden), reflect padding, ReLU, 2x2 average pool
//   -> conv3x3(hidden -> features), reflect padding, ReLU, 2x2 average pool
//   -> global average pool            = z, the penultimate feature (dim = features)
//   -> affine features -> 2           = logits (real, fake)
//
// Parameters live in one flat vector in declaration order:
//   conv1.weight [hidden][C][3][3], conv1.bias [hidden],
//   conv2.weight [features][hidden][3][3], conv2.bias [features],
//   head.weight [2][features], head.bias [2].

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trimlab/tensor.hpp"

namespace trimlab {

using Label = int;
inline constexpr Label kReal = 0;
inline constexpr Label kFake = 1;

constexpr Label flip_label(Label y) noexcept { return 1 - y; }
constexpr bool valid_label(Label y) noexcept { return y == kReal || y == kFake; }

using Logits = std::array<double, 2>;

struct Architecture {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t hidden = 8;
  std::size_t features = 32;

  Shape input_shape() const noexcept { return {channels, height, width}; }
  /// Throws InvalidArgument unless every size is positive and height/width are
  /// multiples of 4 (two 2x2 pools, reflect padding needs >= 2 rows after the first).
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct ParameterLayout {
  std::size_t conv1_weight, conv1_bias, conv2_weight, conv2_bias, head_weight, head_bias, total;

  static ParameterLayout of(const Architecture& arch) noexcept;
};

class DetectorModel {
 public:
  /// All parameters zero.
  explicit DetectorModel(const Architecture& arch);
  DetectorModel(const Architecture& arch, std::vector<double> params);

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases included,
  /// drawn from the (seed, kInit) stream in declaration order.
  static DetectorModel initialized(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  std::size_t feature_dim() const noexcept { return arch_.features; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  std::span<double> conv1_weight() noexcept { return block(layout_.conv1_weight, layout_.conv1_bias); }
  std::span<double> conv1_bias() noexcept { return block(layout_.conv1_bias, layout_.conv2_weight); }
  std::span<double> conv2_weight() noexcept { return block(layout_.conv2_weight, layout_.conv2_bias); }
  std::span<double> conv2_bias() noexcept { return block(layout_.conv2_bias, layout_.head_weight); }
  std::span<double> head_weight() noexcept { return block(layout_.head_weight, layout_.head_bias); }
  std::span<double> head_bias() noexcept { return block(layout_.head_bias, layout_.total); }

  bool operator==(const DetectorModel& o) const { return arch_ == o.arch_ && params_ == o.params_; }

 private:
  std::span<double> block(std::size_t begin, std::size_t end) noexcept {
    return std::span<double>(params_).subspan(begin, end - begin);
  }

  Architecture arch_;
  ParameterLayout layout_;
  std::vector<double> params_;
};

struct SoftmaxOutput {
  double p_real = 0.5;
  double p_fake = 0.5;

  double operator[](Label y) const noexcept { return y == kReal ? p_real : p_fake; }
  /// Throws InvalidArgument unless both are in [0, 1] and they sum to 1 within 1e-12.
  void validate() const;
};

/// Smallest probability fed to any logarithm.
inline constexpr double kProbabilityFloor = 1e-30;

struct ForwardResult {
  Logits logits{};
  std::vector<double> z;
};

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  std::vector<double> padded_input;  // C x (H+2) x (W+2)
  std::vector<double> pre1;          // hidden x H x W
  std::vector<double> padded_pool1;  // hidden x (H/2+2) x (W/2+2)
  std::vector<double> pre2;          // features x H/2 x W/2
  std::vector<double> z;             // features
  Logits logits{};
};

/// Throws InvalidArgument when x does not match the architecture's input shape.
ForwardResult forward(const DetectorModel& model, const ImageTensor& x);
ForwardTrace forward_trace(const DetectorModel& model, const ImageTensor& x);

/// Reverse pass for an arbitrary upstream gradient on the logits. Parameter
/// gradients are added into `param_grad` (skipped when empty); the input gradient
/// is written into `input_grad` (skipped when null).
void backward(const DetectorModel& model, const ForwardTrace& trace, const Logits& dlogits,
              std::span<double> param_grad, Tensor3* input_grad);

/// Max-subtracted softmax. Throws InvalidArgument on non-finite logits.
SoftmaxOutput softmax(const Logits& logits);

/// argmax with ties resolved to kReal.
Label predict(const SoftmaxOutput& p) noexcept;
Label predict(const Logits& logits) noexcept;

/// -ln max(p_y, 1e-30).
double cross_entropy(const SoftmaxOutput& probs, Label y);

/// d cross_entropy / d logits for the clamped loss (zero once p_y is below the floor).
Logits cross_entropy_logit_gradient(const SoftmaxOutput& probs, Label y);

/// d CE(softmax(f(x)), y) / d x.
Tensor3 input_gradient(const DetectorModel& model, const ImageTensor& x, Label y);

/// d <weights, f(x)> / d x; the vector-Jacobian product of the logit map.
Tensor3 logit_input_vjp(const DetectorModel& model, const ImageTensor& x, const Logits& weights);

/// Mean over the batch of d CE / d parameters, in the flat parameter layout.
std::vector<double> param_gradient(const DetectorModel& model, std::span<const ImageTensor> xs,
                                   std::span<const Label> ys);

/// Mean cross-entropy and accuracy of the raw detector.
double mean_cross_entropy(const DetectorModel& model, std::span<const ImageTensor> xs,
                          std::span<const Label> ys);
double accuracy(const DetectorModel& model, std::span<const ImageTensor> xs,
                std::span<const Label> ys);

// Checkpoint file, little-endian:
//   "TRIMMDL1" | u32 channels, height, width, hidden, features | u64 parameter count
//   | f64 parameters (declaration order) | u64 FNV-1a 64 of every preceding byte
void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const DetectorModel& model);
DetectorModel decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace trimlab

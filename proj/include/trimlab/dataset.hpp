#pragma once

// Synthetic real-vs-fake images.
//
// Real sample i:  T = blur3x3_sigma0.8(U[0,1) white noise from stream (seed, kRealTexture, i))
// Fake sample i:  clamp(T' + a * pattern), T' drawn the same way from (seed, kFakeTexture, i)
//
// The pattern is zero-mean with values +-1/2, so each fake pixel differs from its
// base texture by a/2 before clamping. Samples are stored interleaved
// (real 0, fake 0, real 1, fake 1, ...), so every even-length prefix is balanced.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trimlab/model.hpp"
#include "trimlab/tensor.hpp"

namespace trimlab {

enum class ArtifactPattern : std::uint8_t { kCheckerboard = 0, kHorizontalStripe = 1 };
enum class BaseTexture : std::uint8_t { kSmoothedNoise = 0 };

std::string to_string(ArtifactPattern p);
ArtifactPattern parse_pattern(const std::string& s);

struct DatasetSpec {
  std::uint64_t n_per_class = 500;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  double amplitude = 2.0 / 255.0;
  ArtifactPattern pattern = ArtifactPattern::kCheckerboard;
  BaseTexture texture = BaseTexture::kSmoothedNoise;
  std::uint64_t seed = 0;

  Shape shape() const noexcept { return {channels, height, width}; }
  /// Throws InvalidArgument for a outside [0, 1], zero sizes or zero samples.
  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct LabeledDataset {
  std::vector<ImageTensor> images;
  std::vector<Label> labels;
  DatasetSpec spec;

  std::size_t size() const noexcept { return images.size(); }
  /// Throws InvalidArgument on unequal class counts, bad labels or mixed shapes.
  void validate() const;
  bool operator==(const LabeledDataset&) const = default;
};

/// Pattern value (+-1/2) at row i, column j.
double pattern_value(ArtifactPattern p, std::size_t i, std::size_t j) noexcept;

/// The smoothed-noise texture for one sample of one class.
ImageTensor base_texture(const DatasetSpec& spec, Label cls, std::uint64_t index);

LabeledDataset generate(const DatasetSpec& spec);

// Dataset file, little-endian:
//   "TRIMDS01"
//   spec block: u64 n_per_class | u32 channels | u32 height | u32 width | f64 amplitude
//               | u8 pattern | u8 texture | u16 reserved (0) | u64 seed
//   u64 sample count
//   per sample: u8 label | channels*height*width f64 values
//   u64 FNV-1a 64 of every preceding byte
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Binary 8-bit PGM (P5) or PPM (P6); intensities scaled by 1/maxval.
/// Throws ParseError with the byte position of a bad header token or unsupported maxval.
ImageTensor decode_pnm(std::span<const std::uint8_t> bytes);
ImageTensor import_pgm(const std::filesystem::path& path);

}  // namespace trimlab

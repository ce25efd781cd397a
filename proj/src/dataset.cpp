#include "trimlab/dataset.hpp"

#include <algorithm>
#include <cctype>

#include "trimlab/binary_io.hpp"
#include "trimlab/denoise.hpp"
#include "trimlab/error.hpp"
#include "trimlab/rng.hpp"

namespace trimlab {

std::string to_string(ArtifactPattern p) {
  return p == ArtifactPattern::kCheckerboard ? "checkerboard" : "horizontal-stripe";
}

ArtifactPattern parse_pattern(const std::string& s) {
  if (s == "checkerboard") return ArtifactPattern::kCheckerboard;
  if (s == "horizontal-stripe") return ArtifactPattern::kHorizontalStripe;
  throw InvalidArgument("unknown artifact pattern '" + s + "'");
}

void DatasetSpec::validate() const {
  if (n_per_class == 0) throw InvalidArgument("n_per_class must be positive");
  if (channels == 0 || height == 0 || width == 0)
    throw InvalidArgument("dataset image dimensions must be positive");
  if (!(amplitude >= 0.0 && amplitude <= 1.0))
    throw InvalidArgument("artifact amplitude must lie in [0, 1]");
}

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) throw InvalidArgument("dataset: image/label count mismatch");
  std::size_t fakes = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!valid_label(labels[i])) throw InvalidArgument("dataset: label outside {0, 1}");
    if (images[i].shape() != images.front().shape())
      throw InvalidArgument("dataset: mixed image shapes");
    fakes += labels[i] == kFake ? 1 : 0;
  }
  if (2 * fakes != images.size()) throw InvalidArgument("dataset: classes are not balanced");
}

double pattern_value(ArtifactPattern p, std::size_t i, std::size_t j) noexcept {
  switch (p) {
    case ArtifactPattern::kCheckerboard:
      return (i + j) % 2 == 0 ? 0.5 : -0.5;
    case ArtifactPattern::kHorizontalStripe:
      return i % 2 == 0 ? 0.5 : -0.5;
  }
  return 0.0;
}

ImageTensor base_texture(const DatasetSpec& spec, Label cls, std::uint64_t index) {
  const Shape s = spec.shape();
  CounterRng rng(spec.seed, cls == kReal ? StreamTag::kRealTexture : StreamTag::kFakeTexture,
                 {index});
  std::vector<double> noise(s.size());
  for (double& v : noise) v = rng.uniform();
  return gaussian_blur(ImageTensor(s, std::move(noise)), 3, 0.8);
}

LabeledDataset generate(const DatasetSpec& spec) {
  spec.validate();
  LabeledDataset ds;
  ds.spec = spec;
  ds.images.reserve(2 * spec.n_per_class);
  ds.labels.reserve(2 * spec.n_per_class);
  const Shape s = spec.shape();
  for (std::uint64_t i = 0; i < spec.n_per_class; ++i) {
    ds.images.push_back(base_texture(spec, kReal, i));
    ds.labels.push_back(kReal);

    const ImageTensor t = base_texture(spec, kFake, i);
    std::vector<double> v(t.values().begin(), t.values().end());
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t h = 0; h < s.height; ++h)
        for (std::size_t w = 0; w < s.width; ++w)
          v[s.index(c, h, w)] += spec.amplitude * pattern_value(spec.pattern, h, w);
    ds.images.push_back(ImageTensor::clamped(s, std::move(v)));
    ds.labels.push_back(kFake);
  }
  return ds;
}

namespace {
constexpr std::string_view kDatasetMagic = "TRIMDS01";
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  const DatasetSpec& s = ds.spec;
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u64(s.n_per_class);
  w.u32(static_cast<std::uint32_t>(s.channels));
  w.u32(static_cast<std::uint32_t>(s.height));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.f64(s.amplitude);
  w.u8(static_cast<std::uint8_t>(s.pattern));
  w.u8(static_cast<std::uint8_t>(s.texture));
  w.u16(0);
  w.u64(s.seed);
  w.u64(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.images[i].shape() != s.shape())
      throw InvalidArgument("dataset: image shape does not match spec");
    w.u8(static_cast<std::uint8_t>(ds.labels[i]));
    for (double v : ds.images[i].values()) w.f64(v);
  }
  w.checksum();
  return w.release();
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  constexpr std::string_view what = "dataset";
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic, what);
  LabeledDataset ds;
  DatasetSpec& s = ds.spec;
  s.n_per_class = r.u64(what);
  s.channels = r.u32(what);
  s.height = r.u32(what);
  s.width = r.u32(what);
  s.amplitude = r.f64(what);
  const std::size_t pattern_at = r.position();
  const std::uint8_t pattern = r.u8(what);
  if (pattern > 1) throw FormatError("dataset: unknown artifact pattern code", pattern_at);
  s.pattern = static_cast<ArtifactPattern>(pattern);
  const std::size_t texture_at = r.position();
  if (r.u8(what) != 0) throw FormatError("dataset: unknown base texture code", texture_at);
  r.u16(what);
  s.seed = r.u64(what);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("dataset: invalid spec block: ") + e.what(), 8);
  }
  const std::uint64_t count = r.u64(what);
  const std::uint64_t per_sample = 1 + 8 * s.shape().size();
  if (count > r.remaining() / per_sample + 1)
    throw TruncatedError("dataset: file truncated", bytes.size());
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t label_at = r.position();
    const std::uint8_t label = r.u8(what);
    if (label > 1) throw FormatError("dataset: label outside {0, 1}", label_at);
    r.need(8 * s.shape().size(), what);
    const std::size_t values_at = r.position();
    std::vector<double> v(s.shape().size());
    for (double& x : v) x = r.f64(what);
    for (std::size_t k = 0; k < v.size(); ++k)
      if (!(v[k] >= 0.0 && v[k] <= 1.0))
        throw FormatError("dataset: pixel value outside [0, 1]", values_at + 8 * k);
    ds.images.emplace_back(s.shape(), std::move(v));
    ds.labels.push_back(label);
  }
  r.verify_checksum(what);
  r.expect_end(what);
  ds.validate();
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  write_file(path, encode_dataset(ds));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path));
}

namespace {

class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* name) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    unsigned long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000'000UL) throw ParseError(std::string("pnm: ") + name + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("pnm: expected ") + name, start);
    if (pos_ < b_.size() && !std::isspace(b_[pos_]) && b_[pos_] != '#')
      throw ParseError(std::string("pnm: bad ") + name + " token", pos_);
    return v;
  }

  std::size_t pos_ = 0;

 private:
  std::span<const std::uint8_t> b_;
};

}  // namespace

ImageTensor decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("pnm: expected binary magic P5 or P6", 0);
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  PnmHeader h(bytes);
  h.pos_ = 2;
  if (h.pos_ < bytes.size() && !std::isspace(bytes[h.pos_]))
    throw ParseError("pnm: bad magic token", h.pos_);
  const unsigned long width = h.number("width");
  const unsigned long height = h.number("height");
  const std::size_t maxval_at = (h.skip_space_and_comments(), h.pos_);
  const unsigned long maxval = h.number("maxval");
  if (width == 0 || height == 0) throw ParseError("pnm: zero image dimension", maxval_at);
  if (maxval == 0 || maxval > 255)
    throw ParseError("pnm: unsupported maxval " + std::to_string(maxval) + " (8-bit only)", maxval_at);
  if (h.pos_ >= bytes.size() || !std::isspace(bytes[h.pos_]))
    throw ParseError("pnm: missing whitespace after maxval", h.pos_);
  ++h.pos_;
  const Shape s{channels, height, width};
  if (bytes.size() - h.pos_ < s.size())
    throw TruncatedError("pnm: pixel data truncated", bytes.size());
  std::vector<double> v(s.size());
  // Samples are interleaved per pixel; stored planar here.
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      for (std::size_t c = 0; c < channels; ++c)
        v[s.index(c, i, j)] = std::min(1.0, bytes[h.pos_ + (i * width + j) * channels + c] /
                                                static_cast<double>(maxval));
  return ImageTensor(s, std::move(v));
}

ImageTensor import_pgm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

}  // namespace trimlab

#include "trimlab/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "trimlab/error.hpp"

namespace trimlab {

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

void validate_step(const DenoiseStep& step) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, GaussianBlurStep>) {
          if (s.kernel % 2 == 0) throw InvalidArgument("blur kernel must be odd");
          if (!(s.sigma > 0.0)) throw InvalidArgument("blur sigma must be positive");
        } else if constexpr (std::is_same_v<T, RandomResizedCropStep>) {
          if (!(s.scale_min > 0.0 && s.scale_min <= s.scale_max && s.scale_max <= 1.0))
            throw InvalidArgument("crop scale range must satisfy 0 < min <= max <= 1");
          if (!(s.aspect_min > 0.0 && s.aspect_min <= s.aspect_max))
            throw InvalidArgument("crop aspect range must satisfy 0 < min <= max");
        } else {
          if (!(s.p >= 0.0 && s.p <= 1.0)) throw InvalidArgument("flip probability outside [0, 1]");
        }
      },
      step);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_args(const std::string& body, const std::string& name, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim_ws(tok);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size())
      throw InvalidArgument("denoiser step " + name + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != n)
    throw InvalidArgument("denoiser step " + name + " expects " + std::to_string(n) + " arguments");
  return out;
}

}  // namespace

void DenoiserSpec::validate() const {
  if (draws < 1) throw InvalidArgument("denoiser draws must be >= 1");
  for (const auto& s : steps) validate_step(s);
}

DenoiserSpec DenoiserSpec::blur_crop_flip() {
  return {{GaussianBlurStep{3, 0.8}, RandomResizedCropStep{}, HorizontalFlipStep{1.0}}, 1};
}

DenoiserSpec DenoiserSpec::flip_only() { return {{HorizontalFlipStep{1.0}}, 1}; }

std::string format_steps(const std::vector<DenoiseStep>& steps) {
  if (steps.empty()) return "none";
  std::string out;
  for (const auto& step : steps) {
    if (!out.empty()) out += "; ";
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, GaussianBlurStep>) {
            out += "blur(" + std::to_string(s.kernel) + "," + fmt_double(s.sigma) + ")";
          } else if constexpr (std::is_same_v<T, RandomResizedCropStep>) {
            out += "crop(" + fmt_double(s.scale_min) + "," + fmt_double(s.scale_max) + "," +
                   fmt_double(s.aspect_min) + "," + fmt_double(s.aspect_max) + ")";
          } else {
            out += "flip(" + fmt_double(s.p) + ")";
          }
        },
        step);
  }
  return out;
}

std::vector<DenoiseStep> parse_steps(const std::string& text) {
  std::vector<DenoiseStep> steps;
  const std::string all = trim_ws(text);
  if (all == "none" || all.empty()) return steps;
  std::stringstream ss(all);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim_ws(item);
    const auto open = item.find('(');
    if (open == std::string::npos || item.back() != ')')
      throw InvalidArgument("denoiser step '" + item + "' is not of the form name(args)");
    const std::string name = trim_ws(item.substr(0, open));
    const std::string body = item.substr(open + 1, item.size() - open - 2);
    if (name == "blur") {
      const auto a = parse_args(body, name, 2);
      if (a[0] < 1 || a[0] != std::floor(a[0])) throw InvalidArgument("blur kernel must be a positive integer");
      steps.emplace_back(GaussianBlurStep{static_cast<std::size_t>(a[0]), a[1]});
    } else if (name == "crop") {
      const auto a = parse_args(body, name, 4);
      steps.emplace_back(RandomResizedCropStep{a[0], a[1], a[2], a[3]});
    } else if (name == "flip") {
      const auto a = parse_args(body, name, 1);
      steps.emplace_back(HorizontalFlipStep{a[0]});
    } else {
      throw InvalidArgument("unknown denoiser step '" + name + "'");
    }
    validate_step(steps.back());
  }
  return steps;
}

std::vector<double> gaussian_kernel(std::size_t kernel, double sigma) {
  if (kernel % 2 == 0) throw InvalidArgument("blur kernel must be odd");
  if (!(sigma > 0.0)) throw InvalidArgument("blur sigma must be positive");
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  std::vector<double> w;
  w.reserve(kernel * kernel);
  double sum = 0.0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    for (std::ptrdiff_t j = -r; j <= r; ++j) {
      const double v = std::exp(-static_cast<double>(i * i + j * j) / (2.0 * sigma * sigma));
      w.push_back(v);
      sum += v;
    }
  }
  for (double& v : w) v /= sum;
  return w;
}

ImageTensor gaussian_blur(const ImageTensor& x, std::size_t kernel, double sigma) {
  const std::vector<double> w = gaussian_kernel(kernel, sigma);
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  const Shape s = x.shape();
  std::vector<double> out(s.size(), 0.0);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < s.height; ++i) {
      for (std::size_t j = 0; j < s.width; ++j) {
        double acc = 0.0;
        std::size_t t = 0;
        for (std::ptrdiff_t di = -r; di <= r; ++di) {
          const std::size_t si = reflect_index(static_cast<std::ptrdiff_t>(i) + di, s.height);
          for (std::ptrdiff_t dj = -r; dj <= r; ++dj, ++t) {
            const std::size_t sj = reflect_index(static_cast<std::ptrdiff_t>(j) + dj, s.width);
            acc += w[t] * x.at(c, si, sj);
          }
        }
        out[s.index(c, i, j)] = acc;
      }
    }
  }
  return ImageTensor::clamped(s, std::move(out));
}

namespace {

ImageTensor crop_resize(const ImageTensor& x, std::size_t top, std::size_t left, std::size_t h,
                        std::size_t w) {
  const Shape s = x.shape();
  std::vector<double> crop(s.channels * h * w);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) crop[(c * h + i) * w + j] = x.at(c, top + i, left + j);
  return resize_bilinear(ImageTensor({s.channels, h, w}, std::move(crop)), s.height, s.width);
}

}  // namespace

ImageTensor resize_bilinear(const ImageTensor& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw InvalidArgument("resize target must be non-empty");
  const Shape s = x.shape();
  const double sy = static_cast<double>(s.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.width) / static_cast<double>(out_w);
  const Shape o{s.channels, out_h, out_w};
  std::vector<double> out(o.size());
  for (std::size_t i = 0; i < out_h; ++i) {
    const double fy = std::clamp((static_cast<double>(i) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(s.height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double fx = std::clamp((static_cast<double>(j) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(s.width - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < s.channels; ++c) {
        const double top = x.at(c, y0, x0) * (1.0 - wx) + x.at(c, y0, x1) * wx;
        const double bot = x.at(c, y1, x0) * (1.0 - wx) + x.at(c, y1, x1) * wx;
        out[o.index(c, i, j)] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return ImageTensor::clamped(o, std::move(out));
}

ImageTensor random_resized_crop(const ImageTensor& x, const RandomResizedCropStep& step,
                                CounterRng& rng) {
  validate_step(step);
  const double H = static_cast<double>(x.height());
  const double W = static_cast<double>(x.width());
  const double area = H * W;
  const double log_lo = std::log(step.aspect_min), log_hi = std::log(step.aspect_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(step.scale_min, step.scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<long>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target / aspect)));
    if (w >= 1 && h >= 1 && w <= static_cast<long>(x.width()) && h <= static_cast<long>(x.height())) {
      const auto top = rng.below(x.height() - static_cast<std::size_t>(h) + 1);
      const auto left = rng.below(x.width() - static_cast<std::size_t>(w) + 1);
      return crop_resize(x, top, left, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    }
  }
  // Center crop honoring the aspect bounds.
  const double ratio = W / H;
  std::size_t w = x.width(), h = x.height();
  if (ratio < step.aspect_min) {
    h = static_cast<std::size_t>(std::max(1L, std::lround(W / step.aspect_min)));
  } else if (ratio > step.aspect_max) {
    w = static_cast<std::size_t>(std::max(1L, std::lround(H * step.aspect_max)));
  }
  h = std::min(h, x.height());
  w = std::min(w, x.width());
  return crop_resize(x, (x.height() - h) / 2, (x.width() - w) / 2, h, w);
}

ImageTensor horizontal_flip(const ImageTensor& x, double p, CounterRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("flip probability outside [0, 1]");
  if (!(rng.uniform() < p)) return x;
  const Shape s = x.shape();
  std::vector<double> out(s.size());
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < s.height; ++i)
      for (std::size_t j = 0; j < s.width; ++j) out[s.index(c, i, j)] = x.at(c, i, s.width - 1 - j);
  return ImageTensor(s, std::move(out));
}

ImageTensor apply_denoiser(const DenoiserSpec& spec, const ImageTensor& x, CounterRng& rng) {
  spec.validate();
  ImageTensor cur = x;
  for (const auto& step : spec.steps) {
    cur = std::visit(
        [&](const auto& s) -> ImageTensor {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, GaussianBlurStep>) {
            return gaussian_blur(cur, s.kernel, s.sigma);
          } else if constexpr (std::is_same_v<T, RandomResizedCropStep>) {
            return random_resized_crop(cur, s, rng);
          } else {
            return horizontal_flip(cur, s.p, rng);
          }
        },
        step);
  }
  return cur;
}

CounterRng denoise_stream(std::uint64_t seed, std::uint64_t sample_id, std::uint64_t draw) {
  return CounterRng(seed, StreamTag::kDenoise, {sample_id, draw});
}

}  // namespace trimlab

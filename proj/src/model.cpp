#include "trimlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "trimlab/binary_io.hpp"
#include "trimlab/error.hpp"
#include "trimlab/rng.hpp"

namespace trimlab {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kTaps = kKernel * kKernel;

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (static_cast<std::size_t>(i) >= n) return 2 * n - 2 - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

// in: C x H x W -> out: C x (H+2) x (W+2), reflect border of width 1.
void pad_reflect(std::span<const double> in, std::size_t C, std::size_t H, std::size_t W,
                 std::vector<double>& out) {
  const std::size_t PH = H + 2, PW = W + 2;
  out.resize(C * PH * PW);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t pi = 0; pi < PH; ++pi) {
      const std::size_t si = reflect(static_cast<std::ptrdiff_t>(pi) - 1, H);
      for (std::size_t pj = 0; pj < PW; ++pj) {
        const std::size_t sj = reflect(static_cast<std::ptrdiff_t>(pj) - 1, W);
        out[(c * PH + pi) * PW + pj] = in[(c * H + si) * W + sj];
      }
    }
  }
}

// Adjoint of pad_reflect: folds the padded gradient back onto the source grid.
void unpad_reflect_add(std::span<const double> padded, std::size_t C, std::size_t H, std::size_t W,
                       std::span<double> out) {
  const std::size_t PH = H + 2, PW = W + 2;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t pi = 0; pi < PH; ++pi) {
      const std::size_t si = reflect(static_cast<std::ptrdiff_t>(pi) - 1, H);
      for (std::size_t pj = 0; pj < PW; ++pj) {
        const std::size_t sj = reflect(static_cast<std::ptrdiff_t>(pj) - 1, W);
        out[(c * H + si) * W + sj] += padded[(c * PH + pi) * PW + pj];
      }
    }
  }
}

void conv3x3(std::span<const double> padded, std::size_t Cin, std::size_t H, std::size_t W,
             std::span<const double> weight, std::span<const double> bias, std::size_t Cout,
             std::vector<double>& out) {
  const std::size_t PW = W + 2, PH = H + 2;
  out.assign(Cout * H * W, 0.0);
  for (std::size_t o = 0; o < Cout; ++o) {
    double* dst = out.data() + o * H * W;
    std::fill(dst, dst + H * W, bias[o]);
    for (std::size_t c = 0; c < Cin; ++c) {
      const double* w = weight.data() + (o * Cin + c) * kTaps;
      const double* src = padded.data() + c * PH * PW;
      for (std::size_t u = 0; u < kKernel; ++u) {
        for (std::size_t v = 0; v < kKernel; ++v) {
          const double wt = w[u * kKernel + v];
          for (std::size_t i = 0; i < H; ++i) {
            const double* row = src + (i + u) * PW + v;
            double* drow = dst + i * W;
            for (std::size_t j = 0; j < W; ++j) drow[j] += wt * row[j];
          }
        }
      }
    }
  }
}

// Given dout (Cout x H x W): accumulates weight/bias gradients and, when
// dpadded is non-empty, the gradient with respect to the padded input.
void conv3x3_backward(std::span<const double> padded, std::size_t Cin, std::size_t H,
                      std::size_t W, std::span<const double> weight, std::size_t Cout,
                      std::span<const double> dout, std::span<double> dweight,
                      std::span<double> dbias, std::span<double> dpadded) {
  const std::size_t PW = W + 2, PH = H + 2;
  for (std::size_t o = 0; o < Cout; ++o) {
    const double* g = dout.data() + o * H * W;
    if (!dbias.empty()) {
      double s = 0.0;
      for (std::size_t k = 0; k < H * W; ++k) s += g[k];
      dbias[o] += s;
    }
    for (std::size_t c = 0; c < Cin; ++c) {
      const double* w = weight.data() + (o * Cin + c) * kTaps;
      const double* src = padded.data() + c * PH * PW;
      double* dsrc = dpadded.empty() ? nullptr : dpadded.data() + c * PH * PW;
      for (std::size_t u = 0; u < kKernel; ++u) {
        for (std::size_t v = 0; v < kKernel; ++v) {
          const double wt = w[u * kKernel + v];
          double acc = 0.0;
          for (std::size_t i = 0; i < H; ++i) {
            const double* row = src + (i + u) * PW + v;
            const double* grow = g + i * W;
            for (std::size_t j = 0; j < W; ++j) acc += grow[j] * row[j];
            if (dsrc) {
              double* drow = dsrc + (i + u) * PW + v;
              for (std::size_t j = 0; j < W; ++j) drow[j] += wt * grow[j];
            }
          }
          if (!dweight.empty()) dweight[(o * Cin + c) * kTaps + u * kKernel + v] += acc;
        }
      }
    }
  }
}

// relu then 2x2 average pool: C x H x W -> C x H/2 x W/2.
void relu_pool(std::span<const double> pre, std::size_t C, std::size_t H, std::size_t W,
               std::vector<double>& out) {
  const std::size_t OH = H / 2, OW = W / 2;
  out.assign(C * OH * OW, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < OH; ++i) {
      for (std::size_t j = 0; j < OW; ++j) {
        const double* p = pre.data() + (c * H + 2 * i) * W + 2 * j;
        out[(c * OH + i) * OW + j] = 0.25 * (std::max(p[0], 0.0) + std::max(p[1], 0.0) +
                                             std::max(p[W], 0.0) + std::max(p[W + 1], 0.0));
      }
    }
  }
}

// Adjoint of relu_pool.
void relu_pool_backward(std::span<const double> pre, std::size_t C, std::size_t H, std::size_t W,
                        std::span<const double> dout, std::vector<double>& dpre) {
  const std::size_t OH = H / 2, OW = W / 2;
  dpre.assign(C * H * W, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = (c * H + i) * W + j;
        if (pre[k] > 0.0) dpre[k] = 0.25 * dout[(c * OH + i / 2) * OW + j / 2];
      }
    }
  }
}

void check_input(const DetectorModel& model, const ImageTensor& x) {
  if (x.shape() != model.architecture().input_shape())
    throw InvalidArgument("input shape " + x.shape().str() + " does not match model input " +
                          model.architecture().input_shape().str());
}

}  // namespace

void Architecture::validate() const {
  if (channels == 0 || hidden == 0 || features == 0)
    throw InvalidArgument("architecture sizes must be positive");
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
    throw InvalidArgument("architecture height/width must be positive multiples of 4, got " +
                          std::to_string(height) + "x" + std::to_string(width));
}

ParameterLayout ParameterLayout::of(const Architecture& a) noexcept {
  ParameterLayout l{};
  l.conv1_weight = 0;
  l.conv1_bias = l.conv1_weight + a.hidden * a.channels * kTaps;
  l.conv2_weight = l.conv1_bias + a.hidden;
  l.conv2_bias = l.conv2_weight + a.features * a.hidden * kTaps;
  l.head_weight = l.conv2_bias + a.features;
  l.head_bias = l.head_weight + 2 * a.features;
  l.total = l.head_bias + 2;
  return l;
}

DetectorModel::DetectorModel(const Architecture& arch)
    : arch_(arch), layout_(ParameterLayout::of(arch)) {
  arch_.validate();
  params_.assign(layout_.total, 0.0);
}

DetectorModel::DetectorModel(const Architecture& arch, std::vector<double> params)
    : arch_(arch), layout_(ParameterLayout::of(arch)), params_(std::move(params)) {
  arch_.validate();
  if (params_.size() != layout_.total)
    throw InvalidArgument("parameter count " + std::to_string(params_.size()) +
                          " does not match architecture (" + std::to_string(layout_.total) + ")");
}

DetectorModel DetectorModel::initialized(const Architecture& arch, std::uint64_t seed) {
  DetectorModel m(arch);
  CounterRng rng(seed, StreamTag::kInit);
  auto fill = [&](std::span<double> block, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : block) v = rng.uniform(-bound, bound);
  };
  fill(m.conv1_weight(), arch.channels * kTaps);
  fill(m.conv1_bias(), arch.channels * kTaps);
  fill(m.conv2_weight(), arch.hidden * kTaps);
  fill(m.conv2_bias(), arch.hidden * kTaps);
  fill(m.head_weight(), arch.features);
  fill(m.head_bias(), arch.features);
  return m;
}

void SoftmaxOutput::validate() const {
  if (!(p_real >= 0.0 && p_real <= 1.0 && p_fake >= 0.0 && p_fake <= 1.0))
    throw InvalidArgument("probabilities must lie in [0, 1]");
  if (std::abs(p_real + p_fake - 1.0) > 1e-12)
    throw InvalidArgument("probabilities must sum to 1 within 1e-12");
}

ForwardTrace forward_trace(const DetectorModel& model, const ImageTensor& x) {
  check_input(model, x);
  const Architecture& a = model.architecture();
  const ParameterLayout& l = model.layout();
  const auto params = model.parameters();
  const std::size_t H = a.height, W = a.width, H2 = H / 2, W2 = W / 2;

  ForwardTrace t;
  pad_reflect(x.values(), a.channels, H, W, t.padded_input);
  conv3x3(t.padded_input, a.channels, H, W, params.subspan(l.conv1_weight),
          params.subspan(l.conv1_bias), a.hidden, t.pre1);

  std::vector<double> pool1;
  relu_pool(t.pre1, a.hidden, H, W, pool1);
  pad_reflect(pool1, a.hidden, H2, W2, t.padded_pool1);
  conv3x3(t.padded_pool1, a.hidden, H2, W2, params.subspan(l.conv2_weight),
          params.subspan(l.conv2_bias), a.features, t.pre2);

  std::vector<double> pool2;
  relu_pool(t.pre2, a.features, H2, W2, pool2);
  const std::size_t cells = (H2 / 2) * (W2 / 2);
  t.z.assign(a.features, 0.0);
  for (std::size_t k = 0; k < a.features; ++k) {
    double s = 0.0;
    for (std::size_t q = 0; q < cells; ++q) s += pool2[k * cells + q];
    t.z[k] = s / static_cast<double>(cells);
  }

  for (std::size_t o = 0; o < 2; ++o) {
    double s = params[l.head_bias + o];
    for (std::size_t k = 0; k < a.features; ++k) s += params[l.head_weight + o * a.features + k] * t.z[k];
    t.logits[o] = s;
  }
  return t;
}

ForwardResult forward(const DetectorModel& model, const ImageTensor& x) {
  ForwardTrace t = forward_trace(model, x);
  return {t.logits, std::move(t.z)};
}

void backward(const DetectorModel& model, const ForwardTrace& t, const Logits& dlogits,
              std::span<double> param_grad, Tensor3* input_grad) {
  const Architecture& a = model.architecture();
  const ParameterLayout& l = model.layout();
  const auto params = model.parameters();
  const std::size_t H = a.height, W = a.width, H2 = H / 2, W2 = W / 2;
  const bool want_params = !param_grad.empty();
  if (want_params && param_grad.size() != l.total)
    throw InvalidArgument("parameter gradient buffer has the wrong size");

  std::vector<double> dz(a.features, 0.0);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t k = 0; k < a.features; ++k) {
      dz[k] += dlogits[o] * params[l.head_weight + o * a.features + k];
      if (want_params) param_grad[l.head_weight + o * a.features + k] += dlogits[o] * t.z[k];
    }
    if (want_params) param_grad[l.head_bias + o] += dlogits[o];
  }

  // Global average pool over the second pooled map, then the pool itself.
  const std::size_t H4 = H2 / 2, W4 = W2 / 2, cells = H4 * W4;
  std::vector<double> dpool2(a.features * cells);
  for (std::size_t k = 0; k < a.features; ++k)
    for (std::size_t q = 0; q < cells; ++q) dpool2[k * cells + q] = dz[k] / static_cast<double>(cells);

  std::vector<double> dpre2;
  relu_pool_backward(t.pre2, a.features, H2, W2, dpool2, dpre2);

  std::vector<double> dpadded_pool1(t.padded_pool1.size(), 0.0);
  auto none = std::span<double>{};
  conv3x3_backward(t.padded_pool1, a.hidden, H2, W2, params.subspan(l.conv2_weight), a.features,
                   dpre2,
                   want_params ? param_grad.subspan(l.conv2_weight, l.conv2_bias - l.conv2_weight) : none,
                   want_params ? param_grad.subspan(l.conv2_bias, l.head_weight - l.conv2_bias) : none,
                   dpadded_pool1);

  std::vector<double> dpool1(a.hidden * H2 * W2, 0.0);
  unpad_reflect_add(dpadded_pool1, a.hidden, H2, W2, dpool1);

  std::vector<double> dpre1;
  relu_pool_backward(t.pre1, a.hidden, H, W, dpool1, dpre1);

  std::vector<double> dpadded_input;
  if (input_grad) dpadded_input.assign(t.padded_input.size(), 0.0);
  conv3x3_backward(t.padded_input, a.channels, H, W, params.subspan(l.conv1_weight), a.hidden,
                   dpre1,
                   want_params ? param_grad.subspan(l.conv1_weight, l.conv1_bias - l.conv1_weight) : none,
                   want_params ? param_grad.subspan(l.conv1_bias, l.conv2_weight - l.conv1_bias) : none,
                   dpadded_input);

  if (input_grad) {
    *input_grad = Tensor3(a.input_shape());
    unpad_reflect_add(dpadded_input, a.channels, H, W, input_grad->values);
  }
}

SoftmaxOutput softmax(const Logits& logits) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1]))
    throw InvalidArgument("softmax: non-finite logits");
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

Label predict(const SoftmaxOutput& p) noexcept { return p.p_fake > p.p_real ? kFake : kReal; }
Label predict(const Logits& logits) noexcept { return logits[1] > logits[0] ? kFake : kReal; }

double cross_entropy(const SoftmaxOutput& probs, Label y) {
  probs.validate();
  if (!valid_label(y)) throw InvalidArgument("label must be 0 (real) or 1 (fake)");
  return -std::log(std::max(probs[y], kProbabilityFloor));
}

Logits cross_entropy_logit_gradient(const SoftmaxOutput& probs, Label y) {
  if (probs[y] < kProbabilityFloor) return {0.0, 0.0};
  Logits g{probs.p_real, probs.p_fake};
  g[static_cast<std::size_t>(y)] -= 1.0;
  return g;
}

Tensor3 input_gradient(const DetectorModel& model, const ImageTensor& x, Label y) {
  if (!valid_label(y)) throw InvalidArgument("label must be 0 (real) or 1 (fake)");
  const ForwardTrace t = forward_trace(model, x);
  Tensor3 g;
  backward(model, t, cross_entropy_logit_gradient(softmax(t.logits), y), {}, &g);
  return g;
}

Tensor3 logit_input_vjp(const DetectorModel& model, const ImageTensor& x, const Logits& weights) {
  const ForwardTrace t = forward_trace(model, x);
  Tensor3 g;
  backward(model, t, weights, {}, &g);
  return g;
}

std::vector<double> param_gradient(const DetectorModel& model, std::span<const ImageTensor> xs,
                                   std::span<const Label> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("param_gradient: batch size mismatch");
  if (xs.empty()) throw InvalidArgument("param_gradient: empty batch");
  std::vector<double> grad(model.layout().total, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!valid_label(ys[i])) throw InvalidArgument("label must be 0 (real) or 1 (fake)");
    const ForwardTrace t = forward_trace(model, xs[i]);
    backward(model, t, cross_entropy_logit_gradient(softmax(t.logits), ys[i]), grad, nullptr);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& g : grad) g *= inv;
  return grad;
}

double mean_cross_entropy(const DetectorModel& model, std::span<const ImageTensor> xs,
                          std::span<const Label> ys) {
  if (xs.size() != ys.size() || xs.empty())
    throw InvalidArgument("mean_cross_entropy: empty or mismatched batch");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    s += cross_entropy(softmax(forward(model, xs[i]).logits), ys[i]);
  return s / static_cast<double>(xs.size());
}

double accuracy(const DetectorModel& model, std::span<const ImageTensor> xs,
                std::span<const Label> ys) {
  if (xs.size() != ys.size() || xs.empty())
    throw InvalidArgument("accuracy: empty or mismatched batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    hits += predict(forward(model, xs[i]).logits) == ys[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(xs.size());
}

namespace {
constexpr std::string_view kModelMagic = "TRIMMDL1";
}

std::vector<std::uint8_t> encode_checkpoint(const DetectorModel& model) {
  const Architecture& a = model.architecture();
  ByteWriter w;
  w.bytes(kModelMagic);
  w.u32(static_cast<std::uint32_t>(a.channels));
  w.u32(static_cast<std::uint32_t>(a.height));
  w.u32(static_cast<std::uint32_t>(a.width));
  w.u32(static_cast<std::uint32_t>(a.hidden));
  w.u32(static_cast<std::uint32_t>(a.features));
  w.u64(model.parameters().size());
  for (double p : model.parameters()) w.f64(p);
  w.checksum();
  return w.release();
}

DetectorModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kModelMagic, "checkpoint");
  Architecture a;
  a.channels = r.u32("checkpoint");
  a.height = r.u32("checkpoint");
  a.width = r.u32("checkpoint");
  a.hidden = r.u32("checkpoint");
  a.features = r.u32("checkpoint");
  const std::size_t arch_end = r.position();
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what(), arch_end);
  }
  const std::uint64_t count = r.u64("checkpoint");
  if (count != ParameterLayout::of(a).total)
    throw FormatError("checkpoint: parameter count does not match architecture", r.position() - 8);
  r.need(count * 8, "checkpoint");
  std::vector<double> params(count);
  for (double& p : params) p = r.f64("checkpoint");
  r.verify_checksum("checkpoint");
  r.expect_end("checkpoint");
  return DetectorModel(a, std::move(params));
}

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}

DetectorModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace trimlab

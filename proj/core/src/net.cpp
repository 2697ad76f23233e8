#include "fluidnet/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fluidnet/binary_io.hpp"
#include "fluidnet/fdops.hpp"
#include "fluidnet/forces.hpp"
#include "fluidnet/random.hpp"

namespace fluidnet {

std::vector<StageDesc> NetArch::stages() const {
  if (kind == ArchKind::linear) return {{2, 1, 1, 0}};
  const int f = features;
  const int k = kernel;
  return {
      {2, f, k, 0},  // input
      {f, f, k, 0}, {f, f, k, 0},  // full-resolution branch
      {f, f, k, 1}, {f, f, k, 1},  // half
      {f, f, k, 2}, {f, f, k, 2},  // quarter
      {f, f, k, 0},  // merge
      {f, 1, 1, 0},  // output
  };
}

template <typename T>
std::size_t NetParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename T>
T& NetParams<T>::flat(std::size_t index) {
  for (auto& l : layers) {
    if (index < l.weight.size()) return l.weight[index];
    index -= l.weight.size();
    if (index < l.bias.size()) return l.bias[index];
    index -= l.bias.size();
  }
  throw std::out_of_range("parameter index out of range");
}

template <typename T>
T NetParams<T>::flat(std::size_t index) const {
  return const_cast<NetParams<T>*>(this)->flat(index);
}

template <typename T>
NetParams<T> zero_params(const NetArch& arch) {
  if (arch.kernel % 2 == 0 || arch.kernel < 1) throw std::invalid_argument("kernel size must be odd");
  if (arch.features < 1) throw std::invalid_argument("feature count must be positive");
  NetParams<T> p;
  p.arch = arch;
  for (const StageDesc& d : arch.stages()) {
    ConvLayer<T> l;
    l.desc = d;
    l.weight.assign(static_cast<std::size_t>(d.out_ch) * d.in_ch * d.kernel * d.kernel, T(0));
    l.bias.assign(static_cast<std::size_t>(d.out_ch), T(0));
    p.layers.push_back(std::move(l));
  }
  return p;
}

template <typename T>
NetParams<T> init_params(const NetArch& arch, std::uint64_t seed) {
  NetParams<T> p = zero_params<T>(arch);
  Rng rng(seed);
  for (auto& l : p.layers) {
    const double bound = std::sqrt(1.0 / (l.desc.in_ch * l.desc.kernel * l.desc.kernel));
    for (auto& w : l.weight) w = static_cast<T>(uniform(rng, -bound, bound));
    for (auto& b : l.bias) b = static_cast<T>(uniform(rng, -bound, bound));
  }
  return p;
}

template <typename To, typename From>
NetParams<To> cast_params(const NetParams<From>& p) {
  NetParams<To> out;
  out.arch = p.arch;
  for (const auto& l : p.layers) {
    ConvLayer<To> c;
    c.desc = l.desc;
    c.weight.assign(l.weight.begin(), l.weight.end());
    c.bias.assign(l.bias.begin(), l.bias.end());
    out.layers.push_back(std::move(c));
  }
  return out;
}

// --- primitives -----------------------------------------------------------------

namespace {

template <typename T>
void check_layer(const Tensor<T>& input, const ConvLayer<T>& layer) {
  if (input.channels != layer.desc.in_ch) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input.channels) + " channels, layer expects " +
                                std::to_string(layer.desc.in_ch));
  }
  const std::size_t k = static_cast<std::size_t>(layer.desc.kernel);
  if (layer.desc.kernel % 2 == 0 ||
      layer.weight.size() != static_cast<std::size_t>(layer.desc.out_ch) * layer.desc.in_ch * k * k ||
      layer.bias.size() != static_cast<std::size_t>(layer.desc.out_ch)) {
    throw std::invalid_argument("conv2d: malformed layer");
  }
}

// Replicate-padded copy of every channel, (H + 2r) x (W + 2r).
template <typename T>
std::vector<T> pad_replicate(const Tensor<T>& x, int r) {
  const int pw = x.width + 2 * r;
  const int ph = x.height + 2 * r;
  std::vector<T> out(static_cast<std::size_t>(x.channels) * pw * ph);
  for (int c = 0; c < x.channels; ++c) {
    T* dst = out.data() + static_cast<std::size_t>(c) * pw * ph;
    const T* src = x.channel(c);
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - r, 0, x.height - 1);
      const T* row = src + static_cast<std::size_t>(sy) * x.width;
      T* drow = dst + static_cast<std::size_t>(y) * pw;
      for (int xx = 0; xx < pw; ++xx) drow[xx] = row[std::clamp(xx - r, 0, x.width - 1)];
    }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvLayer<T>& layer) {
  check_layer(input, layer);
  const int k = layer.desc.kernel;
  const int r = k / 2;
  const int h = input.height;
  const int w = input.width;
  const int pw = w + 2 * r;
  const std::size_t pplane = static_cast<std::size_t>(pw) * (h + 2 * r);
  const std::vector<T> padded = pad_replicate(input, r);

  Tensor<T> out(layer.desc.out_ch, h, w);
  for (int o = 0; o < layer.desc.out_ch; ++o) {
    T* dst = out.channel(o);
    std::fill(dst, dst + out.plane(), layer.bias[o]);
    for (int i = 0; i < layer.desc.in_ch; ++i) {
      const T* src = padded.data() + pplane * i;
      const T* wk = layer.weight.data() + (static_cast<std::size_t>(o) * layer.desc.in_ch + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          for (int y = 0; y < h; ++y) {
            const T* srow = src + static_cast<std::size_t>(y + ky) * pw + kx;
            T* drow = dst + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                          ConvLayer<T>& grad, bool want_input) {
  check_layer(input, layer);
  const int k = layer.desc.kernel;
  const int r = k / 2;
  const int h = input.height;
  const int w = input.width;
  const int pw = w + 2 * r;
  const int ph = h + 2 * r;
  const std::size_t pplane = static_cast<std::size_t>(pw) * ph;
  const std::vector<T> padded = pad_replicate(input, r);
  std::vector<T> gpad(want_input ? padded.size() : 0, T(0));

  for (int o = 0; o < layer.desc.out_ch; ++o) {
    const T* go = grad_out.channel(o);
    T bsum = T(0);
    for (std::size_t c = 0; c < grad_out.plane(); ++c) bsum += go[c];
    grad.bias[o] += bsum;
    for (int i = 0; i < layer.desc.in_ch; ++i) {
      const T* src = padded.data() + pplane * i;
      const std::size_t woff = (static_cast<std::size_t>(o) * layer.desc.in_ch + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T acc = T(0);
          for (int y = 0; y < h; ++y) {
            const T* srow = src + static_cast<std::size_t>(y + ky) * pw + kx;
            const T* grow = go + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) acc += grow[x] * srow[x];
          }
          grad.weight[woff + ky * k + kx] += acc;
          if (!want_input) continue;
          const T wv = layer.weight[woff + ky * k + kx];
          T* gsrc = gpad.data() + pplane * i;
          for (int y = 0; y < h; ++y) {
            T* prow = gsrc + static_cast<std::size_t>(y + ky) * pw + kx;
            const T* grow = go + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) prow[x] += wv * grow[x];
          }
        }
      }
    }
  }

  Tensor<T> gin;
  if (!want_input) return gin;
  gin = Tensor<T>(input.channels, h, w);
  for (int i = 0; i < input.channels; ++i) {
    const T* gsrc = gpad.data() + pplane * i;
    T* dst = gin.channel(i);
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - r, 0, h - 1);
      for (int x = 0; x < pw; ++x) dst[static_cast<std::size_t>(sy) * w + std::clamp(x - r, 0, w - 1)] += gsrc[static_cast<std::size_t>(y) * pw + x];
    }
  }
  return gin;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t k = 0; k < g.data.size(); ++k)
    if (!(pre_activation.data[k] > T(0))) g.data[k] = T(0);
  return g;
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  const int oh = (x.height + 1) / 2;
  const int ow = (x.width + 1) / 2;
  Tensor<T> out(x.channels, oh, ow);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      const int y0 = 2 * y;
      const int y1 = std::min(2 * y + 1, x.height - 1);
      for (int xx = 0; xx < ow; ++xx) {
        const int x0 = 2 * xx;
        const int x1 = std::min(2 * xx + 1, x.width - 1);
        out.at(c, y, xx) = T(0.25) * (x.at(c, y0, x0) + x.at(c, y0, x1) + x.at(c, y1, x0) + x.at(c, y1, x1));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& grad_out, int in_height, int in_width) {
  Tensor<T> g(grad_out.channels, in_height, in_width);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < grad_out.height; ++y) {
      const int y0 = 2 * y;
      const int y1 = std::min(2 * y + 1, in_height - 1);
      for (int xx = 0; xx < grad_out.width; ++xx) {
        const int x0 = 2 * xx;
        const int x1 = std::min(2 * xx + 1, in_width - 1);
        const T v = T(0.25) * grad_out.at(c, y, xx);
        g.at(c, y0, x0) += v;
        g.at(c, y0, x1) += v;
        g.at(c, y1, x0) += v;
        g.at(c, y1, x1) += v;
      }
    }
  }
  return g;
}

namespace {

// Source taps of output index o under x2 align-corners=false upsampling:
// value = w0 * src[i0] + w1 * src[i1].
struct Taps {
  int i0;
  int i1;
  double w0;
  double w1;
};

inline Taps up_taps(int o, int n) {
  const int k = o / 2;
  if (o % 2 == 0) return {k, std::max(k - 1, 0), 0.75, 0.25};
  return {k, std::min(k + 1, n - 1), 0.75, 0.25};
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x) {
  Tensor<T> out(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      const Taps ty = up_taps(y, x.height);
      for (int xx = 0; xx < out.width; ++xx) {
        const Taps tx = up_taps(xx, x.width);
        const T top = T(tx.w0) * x.at(c, ty.i0, tx.i0) + T(tx.w1) * x.at(c, ty.i0, tx.i1);
        const T bot = T(tx.w0) * x.at(c, ty.i1, tx.i0) + T(tx.w1) * x.at(c, ty.i1, tx.i1);
        out.at(c, y, xx) = T(ty.w0) * top + T(ty.w1) * bot;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_bilinear2_backward(const Tensor<T>& grad_out, int in_height, int in_width) {
  Tensor<T> g(grad_out.channels, in_height, in_width);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < grad_out.height; ++y) {
      const Taps ty = up_taps(y, in_height);
      for (int xx = 0; xx < grad_out.width; ++xx) {
        const Taps tx = up_taps(xx, in_width);
        const T v = grad_out.at(c, y, xx);
        const T vt = T(ty.w0) * v;
        const T vb = T(ty.w1) * v;
        g.at(c, ty.i0, tx.i0) += T(tx.w0) * vt;
        g.at(c, ty.i0, tx.i1) += T(tx.w1) * vt;
        g.at(c, ty.i1, tx.i0) += T(tx.w0) * vb;
        g.at(c, ty.i1, tx.i1) += T(tx.w1) * vb;
      }
    }
  }
  return g;
}

// --- network ----------------------------------------------------------------------

namespace {

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  for (std::size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += x.data[k];
}

template <typename T>
void check_params(const NetParams<T>& params) {
  const auto descs = params.arch.stages();
  if (params.layers.size() != descs.size()) throw std::invalid_argument("parameters do not match architecture");
  for (std::size_t s = 0; s < descs.size(); ++s)
    if (!(params.layers[s].desc == descs[s])) throw std::invalid_argument("parameters do not match architecture");
}

}  // namespace

template <typename T>
NetOutput<T> net_forward(const NetParams<T>& params, const ScalarGrid& div_in, const OccupancyGrid& g, double scale) {
  const GridDims& d = div_in.dims;
  if (d.nx % 4 != 0 || d.ny % 4 != 0) {
    throw std::invalid_argument("network input dims must be divisible by 4, got " + std::to_string(d.nx) + "x" +
                                std::to_string(d.ny));
  }
  if (!(g.dims == d)) throw std::invalid_argument("divergence and occupancy dims differ");
  if (!(scale > 0.0)) throw std::invalid_argument("network scale must be positive");
  check_params(params);

  NetOutput<T> res;
  NetCache<T>& cache = res.cache;
  cache.scale = scale;
  cache.height = d.ny;
  cache.width = d.nx;
  cache.fluid.resize(d.cells());
  const std::size_t n_stages = params.layers.size();
  cache.conv_inputs.resize(n_stages);
  cache.pre_relu.resize(n_stages);

  Tensor<T> x0(2, d.ny, d.nx);
  for (std::size_t c = 0; c < d.cells(); ++c) {
    cache.fluid[c] = g.solid[c] ? 0 : 1;
    x0.data[c] = static_cast<T>(div_in.values[c] / scale);
    x0.data[d.cells() + c] = g.solid[c] ? T(1) : T(0);
  }

  const auto& L = params.layers;
  Tensor<T> out;
  if (params.arch.kind == ArchKind::linear) {
    cache.conv_inputs[0] = x0;
    out = conv2d(x0, L[0]);
  } else {
    using namespace stage;
    // conv + ReLU, recording the conv input and pre-activation.
    const auto block = [&](int s, Tensor<T> in) {
      Tensor<T> z = conv2d(in, L[s]);
      cache.conv_inputs[s] = std::move(in);
      Tensor<T> a = relu(z);
      cache.pre_relu[s] = std::move(z);
      return a;
    };
    Tensor<T> h1 = block(kInput, x0);
    Tensor<T> full = block(kFull2, block(kFull1, h1));
    Tensor<T> d1 = avg_pool2(h1);
    Tensor<T> d2 = avg_pool2(d1);
    Tensor<T> half = upsample_bilinear2(block(kHalf2, block(kHalf1, d1)));
    Tensor<T> quarter = upsample_bilinear2(upsample_bilinear2(block(kQuarter2, block(kQuarter1, d2))));
    add_into(full, half);
    add_into(full, quarter);
    Tensor<T> merged = block(kMerge, std::move(full));
    cache.conv_inputs[kOutput] = merged;
    out = conv2d(merged, L[kOutput]);
  }

  res.p_hat = ScalarGrid(d);
  for (std::size_t c = 0; c < d.cells(); ++c)
    res.p_hat.values[c] = cache.fluid[c] ? scale * static_cast<double>(out.data[c]) : 0.0;
  return res;
}

template <typename T>
NetParams<T> net_backward(const NetParams<T>& params, const NetCache<T>& cache, const ScalarGrid& grad_p_hat) {
  NetParams<T> grad = zero_params<T>(params.arch);
  const int h = cache.height;
  const int w = cache.width;
  Tensor<T> g_out(1, h, w);
  for (std::size_t c = 0; c < g_out.data.size(); ++c)
    g_out.data[c] = cache.fluid[c] ? static_cast<T>(cache.scale * grad_p_hat.values[c]) : T(0);

  const auto& L = params.layers;
  auto& G = grad.layers;
  if (params.arch.kind == ArchKind::linear) {
    conv2d_backward(cache.conv_inputs[0], L[0], g_out, G[0], false);
    return grad;
  }

  using namespace stage;
  // Backward through conv + ReLU of stage s given the cotangent of its output.
  const auto block_back = [&](int s, const Tensor<T>& g_act, bool want_input) {
    return conv2d_backward(cache.conv_inputs[s], L[s], relu_backward(cache.pre_relu[s], g_act), G[s], want_input);
  };

  const Tensor<T> g_merged = conv2d_backward(cache.conv_inputs[kOutput], L[kOutput], g_out, G[kOutput]);
  const Tensor<T> g_sum = block_back(kMerge, g_merged, true);

  Tensor<T> g_h1 = block_back(kFull1, block_back(kFull2, g_sum, true), true);

  const int h2 = (h + 1) / 2;
  const int w2 = (w + 1) / 2;
  const int h4 = (h2 + 1) / 2;
  const int w4 = (w2 + 1) / 2;
  Tensor<T> g_d1 = block_back(kHalf1, block_back(kHalf2, upsample_bilinear2_backward(g_sum, h2, w2), true), true);
  const Tensor<T> g_q = upsample_bilinear2_backward(upsample_bilinear2_backward(g_sum, h2, w2), h4, w4);
  const Tensor<T> g_d2 = block_back(kQuarter1, block_back(kQuarter2, g_q, true), true);
  add_into(g_d1, avg_pool2_backward(g_d2, h2, w2));
  add_into(g_h1, avg_pool2_backward(g_d1, h, w));
  block_back(kInput, g_h1, false);
  return grad;
}

double velocity_scale(const MacVelocity& u) {
  const std::size_t n = u.ux.size() + u.uy.size();
  double sum = 0.0;
  for (double v : u.ux) sum += v;
  for (double v : u.uy) sum += v;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (double v : u.ux) var += (v - mean) * (v - mean);
  for (double v : u.uy) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(n));
}

template <typename T>
Projection<T> learned_project(const NetParams<T>& params, const MacVelocity& u_star, const OccupancyGrid& g,
                              Vec2 solid_velocity) {
  Projection<T> res;
  const double s = velocity_scale(u_star);
  if (!(s >= kScaleBypass)) {
    res.u_hat = u_star;
    res.p_hat = ScalarGrid(u_star.dims);
    res.bypassed = true;
    return res;
  }
  NetOutput<T> out = net_forward(params, divergence(u_star, g), g, s);
  res.u_hat = enforce_solid_velocities(subtract_pressure_gradient(u_star, out.p_hat, g), g, solid_velocity);
  res.p_hat = std::move(out.p_hat);
  res.cache = std::move(out.cache);
  return res;
}

// --- FNM1 -----------------------------------------------------------------------------

namespace {

constexpr std::uint16_t kModelVersion = 1;

NetArch arch_from_stages(const std::vector<StageDesc>& descs) {
  NetArch arch;
  if (descs.size() == 1) {
    arch = NetArch::linear();
  } else if (descs.size() == static_cast<std::size_t>(stage::kCount)) {
    arch.kind = ArchKind::multires;
    arch.features = descs[0].out_ch;
    arch.kernel = descs[0].kernel;
  } else {
    throw FormatError("FNM1: unsupported stage count " + std::to_string(descs.size()));
  }
  if (arch.features < 1 || arch.kernel < 1 || arch.kernel % 2 == 0 || !(arch.stages() == descs)) {
    throw FormatError("FNM1: stage descriptors do not match a supported architecture");
  }
  return arch;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const NetParams<float>& params) {
  check_params(params);
  ByteWriter w;
  w.bytes("FNM1");
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    w.u16(static_cast<std::uint16_t>(l.desc.in_ch));
    w.u16(static_cast<std::uint16_t>(l.desc.out_ch));
    w.u8(static_cast<std::uint8_t>(l.desc.kernel));
    w.u8(static_cast<std::uint8_t>(l.desc.level));
  }
  for (const auto& l : params.layers) {
    for (float v : l.weight) w.f32(v);
    for (float v : l.bias) w.f32(v);
  }
  return std::move(w).data();
}

NetParams<float> decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "FNM1");
  r.expect("FNM1");
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) throw FormatError("FNM1: unsupported version " + std::to_string(version));
  const int count = r.u8();
  std::vector<StageDesc> descs(static_cast<std::size_t>(count));
  for (auto& d : descs) {
    d.in_ch = r.u16();
    d.out_ch = r.u16();
    d.kernel = r.u8();
    d.level = r.u8();
  }
  NetParams<float> p = zero_params<float>(arch_from_stages(descs));
  for (auto& l : p.layers) {
    for (float& v : l.weight) v = r.f32();
    for (float& v : l.bias) v = r.f32();
  }
  r.expect_end();
  return p;
}

void save_model(const std::string& path, const NetParams<float>& params) { write_file(path, encode_model(params)); }

NetParams<float> load_model(const std::string& path) { return decode_model(read_file(path)); }

// --- instantiations -------------------------------------------------------------------

#define FLUIDNET_INSTANTIATE(T)                                                                                   \
  template struct NetParams<T>;                                                                                   \
  template NetParams<T> zero_params<T>(const NetArch&);                                                           \
  template NetParams<T> init_params<T>(const NetArch&, std::uint64_t);                                            \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvLayer<T>&);                                            \
  template Tensor<T> conv2d_backward<T>(const Tensor<T>&, const ConvLayer<T>&, const Tensor<T>&, ConvLayer<T>&,   \
                                        bool);                                                                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                                   \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> avg_pool2<T>(const Tensor<T>&);                                                              \
  template Tensor<T> avg_pool2_backward<T>(const Tensor<T>&, int, int);                                           \
  template Tensor<T> upsample_bilinear2<T>(const Tensor<T>&);                                                     \
  template Tensor<T> upsample_bilinear2_backward<T>(const Tensor<T>&, int, int);                                  \
  template NetOutput<T> net_forward<T>(const NetParams<T>&, const ScalarGrid&, const OccupancyGrid&, double);     \
  template NetParams<T> net_backward<T>(const NetParams<T>&, const NetCache<T>&, const ScalarGrid&);              \
  template Projection<T> learned_project<T>(const NetParams<T>&, const MacVelocity&, const OccupancyGrid&, Vec2);

FLUIDNET_INSTANTIATE(float)
FLUIDNET_INSTANTIATE(double)

#undef FLUIDNET_INSTANTIATE

template NetParams<float> cast_params<float, double>(const NetParams<double>&);
template NetParams<double> cast_params<double, float>(const NetParams<float>&);
template NetParams<float> cast_params<float, float>(const NetParams<float>&);
template NetParams<double> cast_params<double, double>(const NetParams<double>&);

}  // namespace fluidnet

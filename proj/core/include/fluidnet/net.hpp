#pragma once

// Learned pressure projection.
//
// The network maps (divergence / s, occupancy) to a pressure estimate, where s
// is the standard deviation of the divergent velocity; the output is scaled
// back by s and zeroed on solid cells. Velocity is only ever corrected by the
// gradient of that pressure, so the correction is a conservative field.
//
// Multi-resolution layout (F features, k x k kernels, replicate padding):
//
//   input(2) -> conv k, 2->F, ReLU -> h1
//   h1               -> [conv+ReLU] x2                   --+
//   pool(h1)         -> [conv+ReLU] x2 -> up               +--> sum
//   pool(pool(h1))   -> [conv+ReLU] x2 -> up -> up       --+
//   sum -> conv k, F->F, ReLU -> conv 1x1, F->1 -> output
//
// Every input-to-output path crosses five convolutions.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fluidnet/grid.hpp"

namespace fluidnet {

template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  T* channel(int c) { return data.data() + plane() * c; }
  const T* channel(int c) const { return data.data() + plane() * c; }
  T& at(int c, int y, int x) { return data[plane() * c + static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int y, int x) const { return data[plane() * c + static_cast<std::size_t>(y) * width + x]; }
};

struct StageDesc {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int level = 0;  // 0 = full resolution, 1 = half, 2 = quarter

  friend bool operator==(const StageDesc&, const StageDesc&) = default;
};

enum class ArchKind { multires, linear };

struct NetArch {
  ArchKind kind = ArchKind::multires;
  int features = 16;
  int kernel = 3;

  // A single 1x1 convolution without nonlinearity (used for exact gradient
  // checks).
  static NetArch linear() { return {ArchKind::linear, 1, 1}; }

  std::vector<StageDesc> stages() const;

  friend bool operator==(const NetArch&, const NetArch&) = default;
};

// Stage indices of the multi-resolution layout.
namespace stage {
inline constexpr int kInput = 0;
inline constexpr int kFull1 = 1;
inline constexpr int kFull2 = 2;
inline constexpr int kHalf1 = 3;
inline constexpr int kHalf2 = 4;
inline constexpr int kQuarter1 = 5;
inline constexpr int kQuarter2 = 6;
inline constexpr int kMerge = 7;
inline constexpr int kOutput = 8;
inline constexpr int kCount = 9;
}  // namespace stage

template <typename T>
struct ConvLayer {
  StageDesc desc;
  std::vector<T> weight;  // (out, in, k, k)
  std::vector<T> bias;    // (out)
};

template <typename T>
struct NetParams {
  NetArch arch;
  std::vector<ConvLayer<T>> layers;

  std::size_t parameter_count() const;
  // Flat view in stage order, weights before bias within a stage.
  T& flat(std::size_t index);
  T flat(std::size_t index) const;
};

// Zero-valued parameters with shapes from the architecture.
template <typename T>
NetParams<T> zero_params(const NetArch& arch);

// Uniform in +-sqrt(1 / fan_in) per stage, fan_in = in_ch * k * k.
template <typename T>
NetParams<T> init_params(const NetArch& arch, std::uint64_t seed);

template <typename To, typename From>
NetParams<To> cast_params(const NetParams<From>& p);

// --- primitives (stride 1, replicate padding) ---------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvLayer<T>& layer);

// Accumulates weight/bias cotangents into grad and returns the input cotangent
// (skipped when want_input is false).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                          ConvLayer<T>& grad, bool want_input = true);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_out);

// 2x2 mean, stride 2; odd extents are padded by replicating the last row/column.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x);
template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& grad_out, int in_height, int in_width);

// x2 bilinear, align-corners = false.
template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_bilinear2_backward(const Tensor<T>& grad_out, int in_height, int in_width);

// --- network ------------------------------------------------------------------

template <typename T>
struct NetCache {
  double scale = 1.0;
  std::vector<std::uint8_t> fluid;  // per cell
  std::vector<Tensor<T>> conv_inputs;  // per stage
  std::vector<Tensor<T>> pre_relu;     // per stage (empty for the linear output)
  int height = 0;
  int width = 0;
};

template <typename T>
struct NetOutput {
  ScalarGrid p_hat;
  NetCache<T> cache;
};

// Requires dims divisible by 4 (std::invalid_argument otherwise). scale is the
// caller-supplied normalization s > 0.
template <typename T>
NetOutput<T> net_forward(const NetParams<T>& params, const ScalarGrid& div_in, const OccupancyGrid& g, double scale);

// Exact reverse-mode parameter gradients for a cotangent on p_hat.
template <typename T>
NetParams<T> net_backward(const NetParams<T>& params, const NetCache<T>& cache, const ScalarGrid& grad_p_hat);

// --- projection wrapper ---------------------------------------------------------

inline constexpr double kScaleBypass = 1e-6;

// Population standard deviation over every face sample.
double velocity_scale(const MacVelocity& u);

template <typename T>
struct Projection {
  MacVelocity u_hat;
  ScalarGrid p_hat;
  bool bypassed = false;
  NetCache<T> cache;  // valid when !bypassed
};

// u_hat = u* - grad(p_hat) with p_hat from the network; returns (u*, 0) when
// the velocity scale is below kScaleBypass. Solid faces are re-enforced.
template <typename T>
Projection<T> learned_project(const NetParams<T>& params, const MacVelocity& u_star, const OccupancyGrid& g,
                              Vec2 solid_velocity = {});

// --- FNM1 model files --------------------------------------------------------------

// "FNM1", u16 version = 1, u8 stage count, per stage (u16 in, u16 out,
// u8 kernel, u8 level), then per stage all weights followed by all biases as
// little-endian f32.
std::vector<std::uint8_t> encode_model(const NetParams<float>& params);
NetParams<float> decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::string& path, const NetParams<float>& params);
NetParams<float> load_model(const std::string& path);

}  // namespace fluidnet

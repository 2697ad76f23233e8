#pragma once

// FNF1 frame files (little-endian):
//
//   "FNF1", u16 version = 1, u8 ndims = 2, u32 nx, u32 ny, f32 dt, u8 flags,
//   occupancy nx*ny u8, ux (nx+1)*ny f32, uy nx*(ny+1) f32,
//   density nx*ny f32, [pressure nx*ny f32]
//
// flags bit 0: pressure present; bit 1: open-top boundary.
// Fields are stored as f32, so a round trip is bitwise for float-representable
// values.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fluidnet/grid.hpp"

namespace fluidnet {

struct FrameRecord {
  OccupancyGrid g;
  MacVelocity u;
  ScalarGrid density;
  float dt = 0.0f;
  std::optional<ScalarGrid> pressure;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

std::vector<std::uint8_t> encode_frame(const FrameRecord& frame);
// Throws FormatError on bad magic, version, shape, or length.
FrameRecord decode_frame(std::span<const std::uint8_t> bytes);
void write_frame(const std::string& path, const FrameRecord& frame);
FrameRecord read_frame(const std::string& path);

}  // namespace fluidnet

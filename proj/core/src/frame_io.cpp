#include "fluidnet/frame_io.hpp"

#include "fluidnet/binary_io.hpp"

namespace fluidnet {

namespace {

constexpr std::uint16_t kFrameVersion = 1;
constexpr std::uint8_t kHasPressure = 1;
constexpr std::uint8_t kOpenTop = 2;
constexpr std::uint32_t kMaxExtent = 1u << 15;

void put(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.f32(static_cast<float>(x));
}

void get(ByteReader& r, std::vector<double>& v) {
  for (double& x : v) x = r.f32();
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const FrameRecord& frame) {
  const GridDims& d = frame.g.dims;
  if (!(frame.u.dims == d) || !(frame.density.dims == d) || (frame.pressure && !(frame.pressure->dims == d))) {
    throw std::invalid_argument("FNF1: field dims differ");
  }
  ByteWriter w;
  w.bytes("FNF1");
  w.u16(kFrameVersion);
  w.u8(2);
  w.u32(static_cast<std::uint32_t>(d.nx));
  w.u32(static_cast<std::uint32_t>(d.ny));
  w.f32(frame.dt);
  std::uint8_t flags = 0;
  if (frame.pressure) flags |= kHasPressure;
  if (frame.g.boundary == BoundaryMode::open_top) flags |= kOpenTop;
  w.u8(flags);
  for (std::uint8_t s : frame.g.solid) w.u8(s ? 1 : 0);
  put(w, frame.u.ux);
  put(w, frame.u.uy);
  put(w, frame.density.values);
  if (frame.pressure) put(w, frame.pressure->values);
  return std::move(w).data();
}

FrameRecord decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "FNF1");
  r.expect("FNF1");
  const std::uint16_t version = r.u16();
  if (version != kFrameVersion) throw FormatError("FNF1: unsupported version " + std::to_string(version));
  if (r.u8() != 2) throw FormatError("FNF1: only 2D frames are supported");
  const std::uint32_t nx = r.u32();
  const std::uint32_t ny = r.u32();
  if (nx < 4 || ny < 4 || nx > kMaxExtent || ny > kMaxExtent) {
    throw FormatError("FNF1: bad shape " + std::to_string(nx) + "x" + std::to_string(ny));
  }
  FrameRecord f;
  f.dt = r.f32();
  const std::uint8_t flags = r.u8();
  if (flags & ~(kHasPressure | kOpenTop)) throw FormatError("FNF1: unknown flag bits");
  const GridDims d{static_cast<int>(nx), static_cast<int>(ny), 1.0};
  f.g = OccupancyGrid(d, (flags & kOpenTop) ? BoundaryMode::open_top : BoundaryMode::closed);
  for (auto& s : f.g.solid) {
    s = r.u8();
    if (s > 1) throw FormatError("FNF1: occupancy byte out of range");
  }
  f.u = MacVelocity(d);
  get(r, f.u.ux);
  get(r, f.u.uy);
  f.density = ScalarGrid(d);
  get(r, f.density.values);
  if (flags & kHasPressure) {
    f.pressure = ScalarGrid(d);
    get(r, f.pressure->values);
  }
  r.expect_end();
  return f;
}

void write_frame(const std::string& path, const FrameRecord& frame) { write_file(path, encode_frame(frame)); }

FrameRecord read_frame(const std::string& path) { return decode_frame(read_file(path)); }

}  // namespace fluidnet

#include "cflow/idx.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cflow/error.hpp"

namespace cflow {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw Error(ErrorCode::Format, "truncated IDX header (" + what + ")");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> b{static_cast<char>((value >> 24) & 0xFF),
                              static_cast<char>((value >> 16) & 0xFF),
                              static_cast<char>((value >> 8) & 0xFF),
                              static_cast<char>(value & 0xFF)};
  out.write(b.data(), 4);
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());

  const std::uint32_t magic = read_be32(in, "magic");
  if (magic != kIdxImageMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", magic);
    throw Error(ErrorCode::Format, std::string("not an IDX image file, magic ") + buf);
  }
  IdxImages out;
  out.count = read_be32(in, "count");
  out.rows = read_be32(in, "rows");
  out.cols = read_be32(in, "cols");
  const std::int64_t dim = out.rows * out.cols;
  if (out.count < 1 || dim < 1) throw Error(ErrorCode::Format, "empty IDX image file");

  std::vector<unsigned char> bytes(static_cast<std::size_t>(out.count * dim));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw Error(ErrorCode::Format, "truncated IDX payload: expected " +
                                       std::to_string(bytes.size()) + " bytes");
  }
  out.pixels.resize(out.count, dim);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.pixels.data()[i] = bytes[i];
  return out;
}

void standardize_globally(RowMatrix& data) {
  const double count = static_cast<double>(data.size());
  if (count < 1) return;
  const double mean = data.mean();
  data.array() -= mean;
  const double var = data.squaredNorm() / count;
  if (var > 0.0) data /= std::sqrt(var);
  // second pass removes the residual mean left by round-off
  data.array() -= data.mean();
}

InputSource load_idx(const std::filesystem::path& path, std::optional<Eigen::Index> expected_dim,
                     EpochOrder order, std::uint64_t seed) {
  IdxImages images = read_idx_images(path);
  if (expected_dim && images.pixels.cols() != *expected_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "IDX images have " + std::to_string(images.pixels.cols()) +
                    " pixels, configuration expects N = " + std::to_string(*expected_dim));
  }
  standardize_globally(images.pixels);
  return InputSource::images(std::move(images.pixels), order, seed);
}

void write_idx_images(const std::filesystem::path& path, std::int64_t count, std::int64_t rows,
                      std::int64_t cols, std::span<const std::uint8_t> pixels) {
  if (static_cast<std::int64_t>(pixels.size()) != count * rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "pixel buffer does not match count*rows*cols");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(count));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace cflow

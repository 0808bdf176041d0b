#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "cflow/network.hpp"
#include "cflow/sgd.hpp"

namespace cflow {

/// Magic number of an IDX image file: unsigned byte data, three dimensions.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

struct IdxImages {
  std::int64_t count = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  /// count x (rows * cols), raw byte values.
  RowMatrix pixels;
};

/// Parses a big-endian IDX image file. Throws Format on a wrong magic
/// (e.g. 0x00000801 label files) or truncated payload, Io if unreadable.
IdxImages read_idx_images(const std::filesystem::path& path);

/// Shifts and scales all entries by one global mean and standard deviation
/// so the whole matrix has mean 0 and variance 1.
void standardize_globally(RowMatrix& data);

/// read_idx_images + standardize_globally, wrapped as an input source.
/// Throws DimensionMismatch if rows * cols differs from expected_dim.
InputSource load_idx(const std::filesystem::path& path,
                     std::optional<Eigen::Index> expected_dim = std::nullopt,
                     EpochOrder order = EpochOrder::Shuffled, std::uint64_t seed = 0);

/// Writes an IDX image file (used for fixtures and data conversion).
void write_idx_images(const std::filesystem::path& path, std::int64_t count, std::int64_t rows,
                      std::int64_t cols, std::span<const std::uint8_t> pixels);

}  // namespace cflow

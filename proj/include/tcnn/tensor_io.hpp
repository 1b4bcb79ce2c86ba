#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcnn/tensor.hpp"

namespace tcnn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary tensor file ("TCNT"):
//   4 bytes  magic "TCNT"
//   u8       version (1)
//   u8       rank
//   u32 LE   dims[rank]
//   f32 LE   data, in row-major order of dims
// Values are rounded to float32 on write.

inline constexpr std::uint8_t kTensorFileVersion = 1;

std::string encode_tensor(std::span<const int> dims, std::span<const double> data);
Tensor decode_tensor(const std::string& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Cubes are stored with rank 4 in C, D, H, W order.
void write_cube(const std::filesystem::path& path, const FeatureCube& cube);
FeatureCube read_cube(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace tcnn

#include "tcnn/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tcnn {

namespace {

constexpr char kMagic[4] = {'T', 'C', 'N', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_tensor(std::span<const int> dims, std::span<const double> data) {
  if (dims.size() > 255) throw FormatError("tensor rank exceeds 255");
  if (element_count(dims) != data.size()) throw FormatError("tensor dims do not match data length");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kTensorFileVersion));
  out.push_back(static_cast<char>(dims.size()));
  for (int d : dims) {
    if (d < 0) throw FormatError("negative tensor dim");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * data.size());
  for (double v : data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a TCNT tensor file (bad magic)");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kTensorFileVersion)
    throw FormatError("unsupported TCNT version " + std::to_string(version));
  const std::size_t rank = static_cast<std::uint8_t>(bytes[5]);
  std::size_t pos = 6;
  if (bytes.size() < pos + 4 * rank) throw FormatError("truncated TCNT header");
  Tensor t;
  t.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i, pos += 4) t.dims[i] = static_cast<int>(get_u32(bytes, pos));
  const std::size_t n = element_count(t.dims);
  if (bytes.size() != pos + 4 * n)
    throw FormatError("TCNT payload length " + std::to_string(bytes.size() - pos) +
                      " does not match dims (" + std::to_string(4 * n) + " expected)");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i, pos += 4)
    t.data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
  return t;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_atomic(path, encode_tensor(t.dims, t.data));
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

void write_cube(const std::filesystem::path& path, const FeatureCube& cube) {
  const CubeShape& s = cube.shape();
  const int dims[4] = {s.channels, s.depth, s.height, s.width};
  write_file_atomic(path, encode_tensor(dims, cube.data()));
}

FeatureCube read_cube(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 4) throw FormatError(path.string() + ": expected a rank-4 cube");
  return FeatureCube({t.dims[0], t.dims[1], t.dims[2], t.dims[3]}, std::move(t.data));
}

}  // namespace tcnn

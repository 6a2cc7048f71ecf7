#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "stp/tensor.hpp"

namespace stp {

/// Malformed or truncated tensor file. `offset` is the byte position at
/// which decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Layout: "STPT", u32 version = 1, u32 rank, rank × u64 dims, then the
/// row-major float64 payload. Everything little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;

/// Encoded size of a tensor with the given shape.
std::uint64_t tensor_record_size(const Shape& shape);

/// Writes one record at the stream's current position.
void write_tensor(std::ostream& out, const Tensor& tensor);

/// Reads one record. `base` is added to reported error offsets so records
/// inside larger files report absolute positions.
Tensor read_tensor(std::istream& in, std::uint64_t base = 0);

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace stp

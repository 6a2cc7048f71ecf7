#include "stp/tensor_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace stp {

FormatError::FormatError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

constexpr std::array<char, 4> kMagic{'S', 'T', 'P', 'T'};
constexpr std::uint32_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

// Reads little-endian integers while tracking the absolute offset.
class Reader {
 public:
  Reader(std::istream& in, std::uint64_t base) : in_(in), pos_(base) {}

  template <typename U>
  U get(const char* field) {
    std::array<unsigned char, sizeof(U)> bytes{};
    in_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in_.gcount() != static_cast<std::streamsize>(bytes.size())) {
      throw FormatError(std::string("truncated ") + field, pos_ + static_cast<std::uint64_t>(in_.gcount()));
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    pos_ += sizeof(U);
    return value;
  }

  void magic() {
    std::array<char, 4> got{};
    in_.read(got.data(), got.size());
    if (in_.gcount() != 4) throw FormatError("truncated magic", pos_ + static_cast<std::uint64_t>(in_.gcount()));
    for (std::size_t i = 0; i < 4; ++i) {
      if (got[i] != kMagic[i]) throw FormatError("bad magic", pos_ + i);
    }
    pos_ += 4;
  }

  std::uint64_t pos() const { return pos_; }

 private:
  std::istream& in_;
  std::uint64_t pos_;
};

}  // namespace

std::uint64_t tensor_record_size(const Shape& shape) {
  return 12 + 8 * shape.size() + 8 * shape_numel(shape);
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kTensorFileVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(out, d);
  for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw std::runtime_error("write_tensor: stream write failed");
}

Tensor read_tensor(std::istream& in, std::uint64_t base) {
  Reader r(in, base);
  r.magic();
  const std::uint64_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::uint64_t rank_at = r.pos();
  const auto rank = r.get<std::uint32_t>("rank");
  if (rank > kMaxRank) throw FormatError("implausible rank " + std::to_string(rank), rank_at);
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const std::uint64_t at = r.pos();
    const auto dim = r.get<std::uint64_t>("dimension");
    if (dim != 0 && count > std::numeric_limits<std::uint64_t>::max() / 8 / dim) {
      throw FormatError("dimension overflow", at);
    }
    count *= dim;
    d = static_cast<std::size_t>(dim);
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
  return Tensor::from(shape, std::move(values));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Tensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after payload", tensor_record_size(t.shape()));
  }
  return t;
}

}  // namespace stp

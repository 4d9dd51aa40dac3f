// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sparx/common/error.hpp"

namespace sparx {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'X', 'T'};

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <class U>
U get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> b;
  is.read(reinterpret_cast<char*>(b.data()), b.size());
  check<FormatError>(is.gcount() == static_cast<std::streamsize>(b.size()), "truncated tensor file while reading ",
                     what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  check<FormatError>(t.rank() <= 255, "tensor rank ", t.rank(), " exceeds format limit");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    check<FormatError>(d <= 0xffffffffULL, "dimension ", d, " exceeds u32");
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data()) {
    if (t.dtype() == DType::F32)
      put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  check<FormatError>(is.gcount() == 4 && magic == kMagic, "not a tensor file: bad magic");
  auto code = get_le<std::uint8_t>(is, "dtype");
  check<FormatError>(code <= 1, "unknown dtype code ", static_cast<int>(code));
  auto dtype = static_cast<DType>(code);
  auto ndim = get_le<std::uint8_t>(is, "rank");
  Shape shape(ndim);
  for (auto& d : shape) {
    d = get_le<std::uint32_t>(is, "dims");
    check<FormatError>(d > 0, "zero dimension in tensor file");
  }
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) {
    if (dtype == DType::F32)
      v = std::bit_cast<float>(get_le<std::uint32_t>(is, "payload"));
    else
      v = std::bit_cast<double>(get_le<std::uint64_t>(is, "payload"));
  }
  return Tensor(std::move(shape), std::move(values), dtype);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  check<FormatError>(static_cast<bool>(os), "cannot open ", path.string(), " for writing");
  write_tensor(os, t);
  check<FormatError>(static_cast<bool>(os), "failed writing ", path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check<FormatError>(static_cast<bool>(is), "cannot open ", path.string());
  return read_tensor(is);
}

std::string encode_tensor(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  return os.str();
}

Tensor decode_tensor(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_tensor(is);
}

}  // namespace sparx

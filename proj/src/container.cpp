#include "hns/container.hpp"

#include <cstring>
#include <istream>
#include <ostream>

#include "hns/common.hpp"

namespace hns::bin {

namespace {

void write_raw_le(std::ostream& os, std::uint64_t bits, std::size_t n) {
  char buf[8];
  for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<char>(bits >> (8 * i));
  os.write(buf, static_cast<std::streamsize>(n));
}

std::uint64_t read_raw_le(std::istream& is, std::size_t n) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("unexpected end of file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < n; ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
  return bits;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_raw_le(os, v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { write_raw_le(os, v, 8); }

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_raw_le(os, bits, 4);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_raw_le(os, bits, 8);
}

std::uint32_t read_u32(std::istream& is) { return static_cast<std::uint32_t>(read_raw_le(is, 4)); }
std::uint64_t read_u64(std::istream& is) { return read_raw_le(is, 8); }

float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_magic(std::ostream& os, const char magic[8]) { os.write(magic, 8); }

bool check_magic(std::istream& is, const char magic[8]) {
  char buf[8];
  is.read(buf, 8);
  if (is.gcount() != 8) return false;
  return std::memcmp(buf, magic, 8) == 0;
}

std::uint64_t NamedArray::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

NamedArray NamedArray::from(const std::string& name, const Eigen::ArrayXd& v) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(v.size())};
  a.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) a.data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return a;
}

NamedArray NamedArray::from(const std::string& name, const Eigen::ArrayXXd& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data[idx++] = static_cast<float>(m(r, c));
  return a;
}

Eigen::ArrayXd NamedArray::to_vector() const {
  if (shape.size() != 1) throw FormatError("array '" + name + "' is not one-dimensional");
  Eigen::ArrayXd v(static_cast<Eigen::Index>(shape[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = data[static_cast<std::size_t>(i)];
  return v;
}

Eigen::ArrayXXd NamedArray::to_matrix() const {
  if (shape.size() != 2) throw FormatError("array '" + name + "' is not two-dimensional");
  Eigen::ArrayXXd m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[idx++];
  return m;
}

void write_named_arrays(std::ostream& os, const std::vector<NamedArray>& arrays) {
  write_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    write_u32(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_u32(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) write_u64(os, d);
    if (a.data.size() != a.element_count()) throw InvalidArgument("array '" + a.name + "' has inconsistent size");
    for (float v : a.data) write_f32(os, v);
  }
}

std::vector<NamedArray> read_named_arrays(std::istream& is) {
  const std::uint32_t count = read_u32(is);
  if (count > 1'000'000) throw FormatError("implausible array count");
  std::vector<NamedArray> arrays(count);
  for (auto& a : arrays) {
    const std::uint32_t name_len = read_u32(is);
    if (name_len > 4096) throw FormatError("implausible array name length");
    a.name.resize(name_len);
    is.read(a.name.data(), name_len);
    if (static_cast<std::uint32_t>(is.gcount()) != name_len) throw FormatError("unexpected end of file");
    const std::uint32_t ndim = read_u32(is);
    if (ndim > 8) throw FormatError("implausible array rank");
    a.shape.resize(ndim);
    for (auto& d : a.shape) d = read_u64(is);
    const std::uint64_t n = a.element_count();
    if (n > (1ull << 32)) throw FormatError("implausible array size");
    a.data.resize(static_cast<std::size_t>(n));
    for (auto& v : a.data) v = read_f32(is);
  }
  return arrays;
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw FormatError("missing array '" + name + "'");
}

}  // namespace hns::bin

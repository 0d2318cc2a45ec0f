#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hns::bin {

// Little-endian primitives for the binary file formats. Readers throw
// FormatError on truncation.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);

void write_magic(std::ostream& os, const char magic[8]);
// Returns false on a clean mismatch so callers can raise their own error.
bool check_magic(std::istream& is, const char magic[8]);

// A named float32 tensor with an explicit shape.
struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const;

  static NamedArray from(const std::string& name, const Eigen::ArrayXd& v);
  static NamedArray from(const std::string& name, const Eigen::ArrayXXd& m);  // row-major
  Eigen::ArrayXd to_vector() const;
  Eigen::ArrayXXd to_matrix() const;
};

void write_named_arrays(std::ostream& os, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_named_arrays(std::istream& is);

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name);

}  // namespace hns::bin

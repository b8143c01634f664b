#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucim/fp16.hpp"

namespace ucim {

// Container layout (little-endian):
//   "UCIM" u16 version=1 u16 tensor_count
//   per tensor: u16 name_len, name, u8 dtype (0 = FP16), u8 rank, rank x u32 dims,
//               prod(dims) x u16 raw FP16 bits
//   optional:   "ALGN" u32 entry_count, per entry: u16 layer_id, u32 block_id,
//               i8 e_shared, u8 index
struct Tensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<Half> data;

  std::size_t element_count() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct AlignEntry {
  std::uint16_t layer_id = 0;
  std::uint32_t block_id = 0;
  std::int8_t e_shared = 0;
  std::uint8_t index = 0;

  friend bool operator==(const AlignEntry&, const AlignEntry&) = default;
};

struct TensorFile {
  std::vector<Tensor> tensors;
  std::optional<std::vector<AlignEntry>> align;

  const Tensor* find(const std::string& name) const;
  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

std::vector<std::uint8_t> serialize(const TensorFile& f);
TensorFile parse_tensor_file(const std::vector<std::uint8_t>& bytes);

void save_tensor_file(const std::filesystem::path& path, const TensorFile& f);
TensorFile load_tensor_file(const std::filesystem::path& path);

}  // namespace ucim

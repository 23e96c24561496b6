#pragma once

// Binary checkpoint container:
//   "V2VCKPT1" | u64 count | count x { u64 name_len | name (UTF-8) | u64 rank | rank x u64 extent | f32 data }
// All integers and floats little-endian. Text records (network configuration,
// run metadata) are stored as rank-1 tensors holding one byte value per element.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "v2v/tensor.hpp"

namespace v2v {

inline constexpr char kCheckpointMagic[] = "V2VCKPT1";

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

class Checkpoint {
 public:
  void put(std::string name, Tensor<float> tensor);
  void put_text(std::string name, const std::string& text);

  const Tensor<float>* find(const std::string& name) const;
  const Tensor<float>& get(const std::string& name) const;
  std::optional<std::string> text(const std::string& name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<NamedTensor> entries_;
};

}  // namespace v2v

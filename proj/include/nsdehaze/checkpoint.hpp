#ifndef NSDEHAZE_CHECKPOINT_HPP
#define NSDEHAZE_CHECKPOINT_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nsdehaze/tensor.hpp"

namespace nsd::ckpt {

using NamedTensor = std::pair<std::string, ag::Tensor>;

/// Writes `dir/manifest.json` (name -> shape, dtype, byte offset) and
/// `dir/params.bin` (little-endian float32). `meta` is an arbitrary JSON
/// document stored under the manifest's "meta" key.
void write(const std::filesystem::path& dir, const std::vector<std::pair<std::string, const ag::Tensor*>>& tensors,
           const std::string& meta_json = "{}");

struct Contents {
  std::vector<NamedTensor> tensors;
  std::string meta_json;

  /// Throws NotFound if absent.
  const ag::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

/// Throws NotFound for a missing directory or file and FormatError for a
/// malformed manifest or truncated blob.
Contents read(const std::filesystem::path& dir);

/// Rounds every element to the nearest float32 value.
void round_to_float(ag::Tensor& t);

}  // namespace nsd::ckpt

#endif  // NSDEHAZE_CHECKPOINT_HPP

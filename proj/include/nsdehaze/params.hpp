#ifndef NSDEHAZE_PARAMS_HPP
#define NSDEHAZE_PARAMS_HPP

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsdehaze/autograd.hpp"

namespace nsd::nets {

using ag::Tensor;
using ag::Var;

/// Named, ordered collection of trainable parameters plus non-trainable
/// buffers (batch-norm running statistics).
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Var var;
  };
  struct Buffer {
    std::string name;
    Tensor value;
  };

  /// Registers a trainable parameter; names must be unique across
  /// parameters and buffers.
  Var add(const std::string& name, Tensor init);
  void add_buffer(const std::string& name, Tensor init);

  const Var& get(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return params_; }
  const std::vector<Entry>& entries() const { return params_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }
  std::vector<Var> vars() const;

  std::size_t parameter_count() const;
  void zero_grad();
  void set_trainable(bool on);
  /// Deep copy: the clone shares no storage with this set.
  ParamSet clone() const;

 private:
  void claim(const std::string& name, std::size_t slot, bool is_buffer);

  std::vector<Entry> params_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, std::pair<bool, std::size_t>> index_;
};

}  // namespace nsd::nets

#endif  // NSDEHAZE_PARAMS_HPP

#pragma once

#include <map>
#include <string>

#include "gnasforge/tensor.hpp"

namespace gnasforge {

struct Parameter {
  Tensor value;
  bool trainable = true;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Named leaf tensors. Names are slash-separated registry paths
/// ("supernet/block0/transform/x2/w1"); iteration order is lexicographic,
/// which keeps optimizer updates and checkpoints deterministic.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor init, bool trainable = true);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);
  /// Sets the flag on every parameter whose name starts with `prefix`.
  void set_trainable_prefix(const std::string& prefix, bool trainable);

  const std::map<std::string, Parameter>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  const Parameter& lookup(const std::string& name) const;

  std::map<std::string, Parameter> entries_;
};

}  // namespace gnasforge

#include "gnasforge/params.hpp"

#include <stdexcept>

namespace gnasforge {

Tensor& ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
  auto [it, inserted] = entries_.emplace(name, Parameter{std::move(init), trainable});
  if (!inserted) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  return it->second.value;
}

const Parameter& ParameterStore::lookup(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::value(const std::string& name) const { return lookup(name).value; }

Tensor& ParameterStore::value(const std::string& name) {
  return const_cast<Parameter&>(lookup(name)).value;
}

bool ParameterStore::trainable(const std::string& name) const { return lookup(name).trainable; }

void ParameterStore::set_trainable(const std::string& name, bool trainable) {
  const_cast<Parameter&>(lookup(name)).trainable = trainable;
}

void ParameterStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto it = entries_.lower_bound(prefix);
       it != entries_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    it->second.trainable = trainable;
  }
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.numel();
  return n;
}

}  // namespace gnasforge

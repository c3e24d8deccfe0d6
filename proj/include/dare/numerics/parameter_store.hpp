#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dare/numerics/tensor.hpp"

namespace dare {

// Named tensors in insertion order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  ParameterStore() = default;
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  // Throws std::invalid_argument on duplicate names.
  Tensor& add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::int64_t total_elements() const;

  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  // Same names, order and shapes.
  bool same_layout(const ParameterStore& other) const;
  // A store with the same layout and all values zero.
  ParameterStore zeros_like() const;

  // Entries whose name starts with `prefix`, with the prefix removed.
  ParameterStore extract(const std::string& prefix) const;
  // Appends every entry of `other` under `prefix`.
  void merge(const ParameterStore& other, const std::string& prefix);

  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  std::uint64_t seed_ = 0;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dare

#include "dare/numerics/parameter_store.hpp"

#include <stdexcept>

namespace dare {

Tensor& ParameterStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value)});
  return entries_.back().value;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("missing parameter: " + name);
  return entries_[it->second].value;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("missing parameter: " + name);
  return entries_[it->second].value;
}

std::int64_t ParameterStore::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
  }
  return true;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore z(seed_);
  for (const auto& e : entries_) z.add(e.name, Tensor(e.value.shape()));
  return z;
}

ParameterStore ParameterStore::extract(const std::string& prefix) const {
  ParameterStore out(seed_);
  for (const auto& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) == 0) out.add(e.name.substr(prefix.size()), e.value);
  }
  return out;
}

void ParameterStore::merge(const ParameterStore& other, const std::string& prefix) {
  for (const auto& e : other.entries_) add(prefix + e.name, e.value);
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (!(a.entries_[i].value == b.entries_[i].value)) return false;
  }
  return true;
}

}  // namespace dare

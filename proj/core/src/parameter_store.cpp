#include "hufor/parameter_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "hufor/errors.hpp"

namespace hufor {

std::size_t shape_elements(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Param& ParameterStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (name.empty()) throw InvalidArgument("parameter name must not be empty");
  if (entries_.contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  Param p;
  const std::size_t n = shape_elements(shape);
  p.shape = std::move(shape);
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  auto [it, inserted] = entries_.emplace(name, std::move(p));
  order_.push_back(name);
  return it->second;
}

Param& ParameterStore::bind(const std::string& name, const std::vector<std::size_t>& shape) {
  if (auto it = entries_.find(name); it != entries_.end()) {
    if (it->second.shape != shape) {
      throw InvalidArgument("parameter '" + name + "' has shape " + shape_to_string(it->second.shape) +
                            ", expected " + shape_to_string(shape));
    }
    return it->second;
  }
  return add(name, shape);
}

bool ParameterStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

Param& ParameterStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

const Param& ParameterStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) n += p.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : entries_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParameterStore::zero_grad(std::string_view prefix) {
  for (auto& [name, p] : entries_) {
    if (name.starts_with(prefix)) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
}

ParameterStore ParameterStore::slice(std::string_view prefix) const {
  ParameterStore out;
  out.step_ = step_;
  for (const auto& name : order_) {
    if (!name.starts_with(prefix)) continue;
    const Param& p = entries_.find(name)->second;
    out.add(name, p.shape).value = p.value;
  }
  return out;
}

void ParameterStore::merge(const ParameterStore& other) {
  for (const auto& name : other.order_) {
    const Param& src = other.at(name);
    bind(name, src.shape).value = src.value;
  }
}

std::uint64_t ParameterStore::fingerprint(std::string_view prefix) const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& name : order_) {
    if (!name.starts_with(prefix)) continue;
    const Param& p = entries_.find(name)->second;
    mix(name.data(), name.size());
    for (auto d : p.shape) mix(&d, sizeof d);
    mix(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (a.step_ != b.step_ || a.order_ != b.order_) return false;
  for (const auto& name : a.order_) {
    const Param& pa = a.at(name);
    const Param& pb = b.at(name);
    if (pa.shape != pb.shape || pa.value.size() != pb.value.size()) return false;
    if (std::memcmp(pa.value.data(), pb.value.data(), pa.value.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace hufor

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hufor {

struct Param {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const noexcept { return value.size(); }
};

/// Named trainable arrays with matching gradient slots, kept in insertion order.
///
/// Entries live in node-based storage, so references returned by add()/at()
/// stay valid for the lifetime of the store (including across moves). Models
/// bind to entries by reference; a store must outlive the models bound to it
/// and must not be mutated concurrently with a training step.
class ParameterStore {
 public:
  /// Registers a zero-filled entry. Throws InvalidArgument on a duplicate name.
  Param& add(const std::string& name, std::vector<std::size_t> shape);
  /// Returns the existing entry (shape must match) or registers a new one.
  Param& bind(const std::string& name, const std::vector<std::size_t>& shape);

  bool contains(std::string_view name) const;
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_.size(); }
  std::size_t total_elements() const;

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }
  void advance_step() noexcept { ++step_; }

  void zero_grad();
  void zero_grad(std::string_view prefix);

  /// Copy of the entries whose names start with prefix (values only, zero grads).
  ParameterStore slice(std::string_view prefix) const;
  /// Copies every entry of other into this store, overwriting same-named values.
  void merge(const ParameterStore& other);

  /// FNV-1a over names, shapes, and value bytes of entries under prefix.
  std::uint64_t fingerprint(std::string_view prefix = {}) const;

  /// Equality of names, order, shapes, values (bitwise) and step; gradients ignored.
  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  std::map<std::string, Param, std::less<>> entries_;
  std::vector<std::string> order_;
  std::uint64_t step_ = 0;
};

std::size_t shape_elements(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace hufor

#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "gcoco/tensor.hpp"

namespace gcoco {

enum class Role { kTeacher, kCompressor };

inline const char* role_name(Role r) { return r == Role::kTeacher ? "teacher" : "compressor"; }

// Named collection of leaf tensors. Names are ordered, so iteration order
// (and therefore checksums and checkpoint layout) is stable.
template <typename Scalar>
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(Role role) : role_(role) {}

  Role role() const { return role_; }
  void set_role(Role r) { role_ = r; }
  bool frozen() const { return frozen_; }

  // Frozen collections drop their gradients and stop recording.
  void set_frozen(bool frozen) {
    frozen_ = frozen;
    for (auto& [name, t] : tensors_) t.set_requires_grad(!frozen);
  }

  void add(const std::string& name, Tensor<Scalar> t) {
    if (tensors_.count(name)) throw ContractViolation("duplicate parameter name: " + name);
    tensors_.emplace(name, std::move(t));
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor<Scalar>& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractViolation("no parameter named " + name);
    return it->second;
  }
  Tensor<Scalar>& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractViolation("no parameter named " + name);
    return it->second;
  }

  const std::map<std::string, Tensor<Scalar>>& tensors() const { return tensors_; }
  std::map<std::string, Tensor<Scalar>>& tensors() { return tensors_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& kv : tensors_) out.push_back(kv.first);
    return out;
  }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& kv : tensors_) n += static_cast<size_t>(kv.second.size());
    return n;
  }

  void zero_grad() {
    for (auto& kv : tensors_) kv.second.zero_grad();
  }

  // Independent copy: new leaves, same values.
  ModelParams deep_copy() const {
    ModelParams out(role_);
    for (const auto& [name, t] : tensors_) out.add(name, t.clone(t.requires_grad()));
    out.frozen_ = frozen_;
    return out;
  }

  template <typename To>
  ModelParams<To> cast_to() const {
    ModelParams<To> out(role_);
    for (const auto& [name, t] : tensors_) out.add(name, cast<To>(t, t.requires_grad()));
    if (frozen_) out.set_frozen(true);
    return out;
  }

 private:
  std::map<std::string, Tensor<Scalar>> tensors_;
  Role role_ = Role::kTeacher;
  bool frozen_ = false;
};

// FNV-1a over names and raw value bytes, in name order.
template <typename Scalar>
std::uint64_t checksum(const ModelParams<Scalar>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params.tensors()) {
    mix(name.data(), name.size());
    mix(t.value().data(), sizeof(Scalar) * static_cast<size_t>(t.size()));
  }
  return h;
}

// Sum of |grad| over every tensor; absent gradients count as zero.
template <typename Scalar>
double gradient_mass(const ModelParams<Scalar>& params) {
  double total = 0;
  for (const auto& [name, t] : params.tensors())
    if (t.has_grad()) total += static_cast<double>(t.grad().cwiseAbs().sum());
  return total;
}

}  // namespace gcoco

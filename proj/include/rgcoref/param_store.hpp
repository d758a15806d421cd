#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rgcoref/tensor.hpp"

namespace rgcoref {

/// One named parameter with its gradient accumulator and Adam moments.
/// Buffers (batch-norm running statistics) are stored alongside but are not
/// trainable: they carry no gradient and the optimizer skips them.
template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;
  bool trainable = true;
};

using NameFilter = std::function<bool(std::string_view)>;

/// Weight matrices are the parameters whose last name component is "W".
inline bool is_weight_matrix(std::string_view name) {
  return name.size() >= 2 && name.substr(name.size() - 2) == ".W";
}

template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, Shape shape, bool trainable = true) {
    if (params_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Param<T> p;
    p.value = Tensor<T>(shape);
    p.grad = Tensor<T>(shape);
    p.m = Tensor<T>(shape);
    p.v = Tensor<T>(shape);
    p.trainable = trainable;
    return params_.emplace(name, std::move(p)).first->second;
  }

  bool contains(const std::string& name) const { return params_.contains(name); }

  Param<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
  }

  Tensor<T>& value(const std::string& name) { return at(name).value; }
  const Tensor<T>& value(const std::string& name) const { return at(name).value; }
  Tensor<T>& grad(const std::string& name) { return at(name).grad; }
  const Tensor<T>& grad(const std::string& name) const { return at(name).grad; }

  /// Names in a fixed (lexicographic) order; every traversal uses it.
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(T(0));
  }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t t) { step_ = t; }

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, p] : params_) {
      auto& q = out.add(name, p.value.shape(), p.trainable);
      q.value = p.value.template cast<U>();
      q.grad = p.grad.template cast<U>();
      q.m = p.m.template cast<U>();
      q.v = p.v.template cast<U>();
    }
    out.set_step(step_);
    out.metadata() = metadata_;
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.step_ != b.step_ || a.metadata_ != b.metadata_ || a.params_.size() != b.params_.size())
      return false;
    for (auto ia = a.params_.begin(), ib = b.params_.begin(); ia != a.params_.end(); ++ia, ++ib) {
      if (ia->first != ib->first) return false;
      const auto& pa = ia->second;
      const auto& pb = ib->second;
      if (pa.trainable != pb.trainable || !(pa.value == pb.value) || !(pa.m == pb.m) ||
          !(pa.v == pb.v))
        return false;
    }
    return true;
  }

 private:
  std::map<std::string, Param<T>> params_;
  std::map<std::string, std::string> metadata_;
  std::uint64_t step_ = 0;
};

}  // namespace rgcoref

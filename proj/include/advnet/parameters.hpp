#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "advnet/autodiff.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

// Ordered name -> tensor registry. Iteration follows insertion order, which
// is the order checkpoints are written in.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  Tensor<T>& add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
    return entries_.back().value;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].value;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].value;
  }

  Tensor<T>& at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    throw ConfigError("unknown parameter '" + name + "'");
  }
  const Tensor<T>& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw ConfigError("unknown parameter '" + name + "'");
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  std::size_t element_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  // Same names and shapes, all zeros.
  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor<T>::zeros_like(e.value));
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// SGD with momentum and L2 weight decay folded into the velocity:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Every parameter must have a gradient and a velocity of the same shape.
template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, const GradientMap<T>& grads,
                       ParameterSet<T>& velocity, double lr, double momentum,
                       double weight_decay);

}  // namespace advnet

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsbp/rng.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::nn {

// Named parameter store with stable insertion order. Trainable entries
// (weights) get a matching gradient buffer and are visited by the
// optimizer; non-trainable entries (running statistics) are state that
// serializes alongside the weights.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;  // same shape as value for trainable entries, empty else
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, std::vector<int> shape,
                 bool trainable = true) {
    if (index_.count(name))
      throw std::invalid_argument("ParamStore: duplicate name " + name);
    Entry e;
    e.name = name;
    e.value = Tensor<T>(shape);
    if (trainable) e.grad = Tensor<T>(shape);
    e.trainable = trainable;
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("ParamStore: unknown name " + name);
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("ParamStore: unknown name " + name);
    return entries_[it->second];
  }

  Tensor<T>& value(const std::string& name) { return entry(name).value; }
  const Tensor<T>& value(const std::string& name) const {
    return entry(name).value;
  }
  Tensor<T>& grad(const std::string& name) {
    Entry& e = entry(name);
    if (!e.trainable)
      throw std::invalid_argument("ParamStore: no grad for buffer " + name);
    return e.grad;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (Entry& e : entries_)
      if (e.trainable) std::fill(e.grad.v.begin(), e.grad.v.end(), T(0));
  }

  size_t trainable_count() const {
    size_t n = 0;
    for (const Entry& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

  void check_all_finite(const char* where) const {
    for (const Entry& e : entries_)
      if (!e.value.all_finite())
        throw std::runtime_error(std::string(where) + ": non-finite parameter " +
                                 e.name);
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Fan-in-scaled uniform init, U(-a, a) with a = sqrt(1/fan_in); the
// conventional default for convolution kernels.
template <typename T>
void init_uniform_fan_in(Tensor<T>& w, int fan_in, SeqRng& rng) {
  const double a = std::sqrt(1.0 / fan_in);
  for (T& x : w.v) x = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace rsbp::nn

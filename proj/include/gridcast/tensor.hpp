#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridcast/rng.hpp"

namespace gridcast {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void contract_error(const std::string& msg) {
  throw TensorError(msg);
}

// When enabled, every primitive scans its output for non-finite values and
// throws naming the op. Off by default in training hot loops; tests and the
// verification paths switch it on.
inline bool& debug_checks() {
  static bool flag = false;
  return flag;
}

template <typename T>
class Tape;

// Dense row-major tensor. Copies are shallow (storage is shared); ops produce
// fresh tensors, so storage is treated as immutable once an op has returned
// it. The optimizer mutates parameter storage explicitly via data().
template <typename T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> store;
  Tape<T>* tape = nullptr;
  std::int32_t node = -1;

  Tensor() = default;

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    for (auto d : t.shape)
      if (d <= 0) contract_error("tensor: nonpositive extent in " + shape_str(t.shape));
    t.store = std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_numel(t.shape)), T{0});
    return t;
  }

  static Tensor full(Shape s, T v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : *t.store) x = v;
    return t;
  }

  static Tensor from(Shape s, std::vector<T> data) {
    Tensor t;
    t.shape = std::move(s);
    if (static_cast<std::int64_t>(data.size()) != shape_numel(t.shape))
      contract_error("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(t.shape));
    t.store = std::make_shared<std::vector<T>>(std::move(data));
    return t;
  }

  static Tensor scalar(T v) { return from({}, {v}); }

  static Tensor randn(Shape s, Rng& rng, T stddev = T{1}) {
    Tensor t = zeros(std::move(s));
    for (auto& x : *t.store) x = static_cast<T>(rng.normal() * static_cast<double>(stddev));
    return t;
  }

  std::int64_t numel() const { return shape_numel(shape); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

  T* data() { return store->data(); }
  const T* data() const { return store->data(); }
  std::vector<T>& vec() { return *store; }
  const std::vector<T>& vec() const { return *store; }

  T item() const {
    if (!store || numel() != 1) contract_error("item(): tensor is not a scalar");
    return (*store)[0];
  }

  bool defined() const { return static_cast<bool>(store); }
  bool on_tape() const { return tape != nullptr && node >= 0; }

  // Value-identical tensor that participates in no tape.
  Tensor detach() const {
    Tensor t = *this;
    t.tape = nullptr;
    t.node = -1;
    return t;
  }

  // Deep copy, off-tape.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<T>>(*store);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<U>>(store->size());
    for (std::size_t i = 0; i < store->size(); ++i)
      (*t.store)[i] = static_cast<U>((*store)[i]);
    return t;
  }

  bool all_finite() const {
    for (const T& v : *store)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

template <typename T>
void ensure_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) contract_error(what + ": non-finite values");
}

}  // namespace gridcast

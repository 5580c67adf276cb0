#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emospec/error.hpp"

namespace emospec::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), values(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_size(shape))
      throw InvalidArgument("Tensor: " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] std::size_t rank() const noexcept { return shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape.at(i); }
  [[nodiscard]] T* data() noexcept { return values.data(); }
  [[nodiscard]] const T* data() const noexcept { return values.data(); }
  [[nodiscard]] T& operator[](std::size_t i) noexcept { return values[i]; }
  [[nodiscard]] const T& operator[](std::size_t i) const noexcept { return values[i]; }
  [[nodiscard]] std::span<T> span() noexcept { return values; }
  [[nodiscard]] std::span<const T> span() const noexcept { return values; }

  void fill(T v) { std::fill(values.begin(), values.end(), v); }

  // Reset to `s`, zero-filled, reusing storage.
  void reset(const Shape& s) {
    shape = s;
    values.assign(shape_size(shape), T(0));
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    return Tensor<U>(shape, std::vector<U>(values.begin(), values.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace emospec::nn

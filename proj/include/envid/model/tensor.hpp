#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace envid::model {

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Tensor() = default;
  Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    value.assign(numel(), T(0));
    grad.assign(numel(), T(0));
  }

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

}  // namespace envid::model

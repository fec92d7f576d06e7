#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "envid/model/tensor.hpp"

namespace envid::model {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are stored flat
// in parameter order.
template <typename T>
class Adam {
 public:
  Adam(AdamConfig config, std::size_t parameter_count);

  void step(const std::vector<Tensor<T>*>& params);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<T>& first_moment() const { return m_; }
  const std::vector<T>& second_moment() const { return v_; }
  void restore(std::uint64_t steps, std::vector<T> m, std::vector<T> v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<T> m_, v_;
};

}  // namespace envid::model

#include "envid/model/adam.hpp"

#include <cmath>

#include "envid/error.hpp"

namespace envid::model {

template <typename T>
Adam<T>::Adam(AdamConfig config, std::size_t parameter_count)
    : config_(config), m_(parameter_count, T(0)), v_(parameter_count, T(0)) {}

template <typename T>
void Adam<T>::step(const std::vector<Tensor<T>*>& params) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t off = 0;
  for (auto* p : params) {
    if (off + p->numel() > m_.size())
      throw Error(ErrorKind::kShapeMismatch, "optimizer state smaller than parameter list");
    for (std::size_t i = 0; i < p->numel(); ++i, ++off) {
      const double g = p->grad[i];
      const double m = b1 * m_[off] + (1.0 - b1) * g;
      const double v = b2 * v_[off] + (1.0 - b2) * g * g;
      m_[off] = static_cast<T>(m);
      v_[off] = static_cast<T>(v);
      const double update = config_.lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
      p->value[i] = static_cast<T>(p->value[i] - update);
    }
  }
  if (off != m_.size())
    throw Error(ErrorKind::kShapeMismatch, "optimizer state larger than parameter list");
}

template <typename T>
void Adam<T>::restore(std::uint64_t steps, std::vector<T> m, std::vector<T> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw Error(ErrorKind::kShapeMismatch, "optimizer moments do not match the model");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace envid::model

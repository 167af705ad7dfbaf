#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "notecode/numcore/tensor.hpp"

namespace notecode::num {

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the scale applied (1 when untouched).
template <typename T>
double clip_gradients(const std::vector<Parameter<T>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double scale = max_norm / norm;
  for (auto* p : params) p->grad *= static_cast<T>(scale);
  return scale;
}

// SGD with momentum: v <- momentum*v + grad; value <- value - lr*v.
// Velocities are kept per parameter name; frozen parameters are untouched.
template <typename T>
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}

  void step(const std::vector<Parameter<T>*>& params,
            const std::function<double(const Parameter<T>&)>& lr_of) {
    for (auto* p : params) {
      if (p->frozen) continue;
      Mat<T>& v = velocity_[p->name];
      if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
        v = Mat<T>::Zero(p->value.rows(), p->value.cols());
      v = v * static_cast<T>(momentum_) + p->grad;
      p->value -= static_cast<T>(lr_of(*p)) * v;
    }
  }

  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::unordered_map<std::string, Mat<T>> velocity_;
};

}  // namespace notecode::num

#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "notecode/errors.hpp"
#include "notecode/rng.hpp"

namespace notecode::num {

// All dense arrays are row-major so checkpoint payloads can be memcpy'd.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IdMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named dense array with a paired gradient buffer. Frozen parameters are
// skipped by the optimizer and stay bitwise unchanged across steps.
template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <typename T>
void fill_uniform(Mat<T>& m, double lo, double hi, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace notecode::num

#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "petseg/errors.hpp"

namespace petseg::nn {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major float64 array with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape, double fill = 0.0);
  Tensor(std::vector<Index> shape, Eigen::ArrayXd data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<Index>& shape() const noexcept { return shape_; }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  Index size() const noexcept { return data_.size(); }

  const Eigen::ArrayXd& data() const noexcept { return data_; }
  Eigen::ArrayXd& data() noexcept { return data_; }

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }

  double& at(std::initializer_list<Index> idx);
  double at(std::initializer_list<Index> idx) const;

  /// Row-major (rows x cols) view; rows * cols must equal size().
  MatrixMap matrix(Index rows, Index cols);
  ConstMatrixMap matrix(Index rows, Index cols) const;

  Tensor reshaped(std::vector<Index> shape) const;

  /// Throws NonFinite if any element is NaN or infinite.
  void require_finite(const char* where) const;

  std::string shape_string() const;

 private:
  Index flat_index(std::initializer_list<Index> idx) const;

  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

Index shape_product(const std::vector<Index>& shape);

}  // namespace petseg::nn

#include "petseg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace petseg::nn {

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 1) throw Error(ErrorCode::ShapeError, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<Index> shape, double fill) : shape_(std::move(shape)) {
  data_.setConstant(shape_product(shape_), fill);
}

Tensor::Tensor(std::vector<Index> shape, Eigen::ArrayXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw Error(ErrorCode::ShapeError, "data length does not match shape " + shape_string());
  }
}

Index Tensor::flat_index(std::initializer_list<Index> idx) const {
  if (idx.size() != shape_.size()) throw Error(ErrorCode::ShapeError, "index rank mismatch");
  Index flat = 0;
  std::size_t a = 0;
  for (Index i : idx) {
    if (i < 0 || i >= shape_[a]) throw Error(ErrorCode::ShapeError, "index out of range");
    flat = flat * shape_[a] + i;
    ++a;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<Index> idx) { return data_[flat_index(idx)]; }
double Tensor::at(std::initializer_list<Index> idx) const { return data_[flat_index(idx)]; }

MatrixMap Tensor::matrix(Index rows, Index cols) {
  if (rows * cols != size()) throw Error(ErrorCode::ShapeError, "matrix view does not cover tensor");
  return MatrixMap(data_.data(), rows, cols);
}

ConstMatrixMap Tensor::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) throw Error(ErrorCode::ShapeError, "matrix view does not cover tensor");
  return ConstMatrixMap(data_.data(), rows, cols);
}

Tensor Tensor::reshaped(std::vector<Index> shape) const { return Tensor(std::move(shape), data_); }

void Tensor::require_finite(const char* where) const {
  // x * 0 is 0 for finite x and NaN otherwise; the sum vectorises where allFinite does not.
  if (std::isnan((data_ * 0.0).sum())) throw Error(ErrorCode::NonFinite, std::string("non-finite values at ") + where);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

}  // namespace petseg::nn

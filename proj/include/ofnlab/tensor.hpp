#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <new>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ofn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// 64-byte aligned blocks from a per-thread free list keyed by size. The
/// alignment keeps Eigen's vectorized reductions splitting the same way on
/// every run; the free list keeps the many short-lived tape tensors cheap.
void* acquire_block(std::size_t bytes);
void release_block(void* p, std::size_t bytes) noexcept;

template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(acquire_block(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { release_block(p, n * sizeof(T)); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of 64-bit reals. Rank 1 or 2 is all the networks use;
/// a rank-1 tensor of length n is viewed as a 1 x n matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  Storage& storage() noexcept { return data_; }
  const Storage& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Scalar value of a one-element tensor.
  double item() const;

  MatrixMap mat();
  ConstMatrixMap mat() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double squared_norm() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  Storage data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Parameter path (e.g. "critic.0.encoder.layer1.weight") to tensor.
using ParamMap = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

/// Mutable view of a named parameter owned by a network.
struct NamedParam {
  std::string name;
  Tensor* tensor;
};

}  // namespace ofn

#include "ofnlab/tensor.hpp"

#include <cmath>
#include <functional>
#include <new>
#include <unordered_map>
#include <vector>
#include <numeric>
#include <sstream>

#include "ofnlab/errors.hpp"

namespace ofn {

namespace {

constexpr std::align_val_t kBlockAlign{64};
constexpr std::size_t kMaxCachedPerSize = 512;

struct BlockCache {
  std::unordered_map<std::size_t, std::vector<void*>> free;
  ~BlockCache() {
    for (auto& [bytes, blocks] : free) {
      for (void* p : blocks) ::operator delete(p, kBlockAlign);
    }
  }
};

BlockCache& block_cache() {
  thread_local BlockCache cache;
  return cache;
}

}  // namespace

void* acquire_block(std::size_t bytes) {
  auto& list = block_cache().free[bytes];
  if (!list.empty()) {
    void* p = list.back();
    list.pop_back();
    return p;
  }
  return ::operator new(bytes, kBlockAlign);
}

void release_block(void* p, std::size_t bytes) noexcept {
  try {
    auto& list = block_cache().free[bytes];
    if (list.size() < kMaxCachedPerSize) {
      list.push_back(p);
      return;
    }
  } catch (...) {
  }
  ::operator delete(p, kBlockAlign);
}

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ContractViolation("tensor shape must have at least one dimension");
  if (shape.size() > 2) throw ContractViolation("tensor rank above 2 is not supported");
  for (auto d : shape) {
    if (d == 0) throw ContractViolation("tensor dimensions must be positive");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != element_count(shape_)) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractViolation("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

MatrixMap Tensor::mat() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::mat() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace ofn

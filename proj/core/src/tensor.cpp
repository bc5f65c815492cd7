#include "privshield/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace privshield {

std::size_t shape_size(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    check(d > 0, "tensor dimension must be positive, got " + Tensor::shape_str(dims));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> dims)
    : dims_(std::move(dims)), v_(shape_size(dims_), real(0)) {}

Tensor::Tensor(std::vector<int> dims, std::vector<real> values)
    : dims_(std::move(dims)), v_(std::move(values)) {
  check(v_.size() == shape_size(dims_),
        "tensor value count " + std::to_string(v_.size()) +
            " does not match shape " + shape_str());
}

Tensor Tensor::scalar(real v) { return Tensor({1}, {v}); }

std::size_t Tensor::offset(std::initializer_list<int> idx) const {
  check(idx.size() == dims_.size(), "index rank mismatch for shape " + shape_str());
  std::size_t off = 0;
  std::size_t i = 0;
  for (int ix : idx) {
    check(ix >= 0 && ix < dims_[i], "index out of range for shape " + shape_str());
    off = off * static_cast<std::size_t>(dims_[i]) + static_cast<std::size_t>(ix);
    ++i;
  }
  return off;
}

real& Tensor::at(std::initializer_list<int> idx) { return v_[offset(idx)]; }
real Tensor::at(std::initializer_list<int> idx) const { return v_[offset(idx)]; }

real Tensor::item() const {
  check(v_.size() == 1, "item() on non-scalar tensor of shape " + shape_str());
  return v_[0];
}

void Tensor::fill(real v) { std::fill(v_.begin(), v_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> dims) const {
  check(shape_size(dims) == v_.size(),
        "cannot reshape " + shape_str() + " to " + shape_str(dims));
  return Tensor(std::move(dims), v_);
}

bool Tensor::all_finite() const {
  for (real x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

real Tensor::min() const {
  check(!v_.empty(), "min() on empty tensor");
  return *std::min_element(v_.begin(), v_.end());
}

real Tensor::max() const {
  check(!v_.empty(), "max() on empty tensor");
  return *std::max_element(v_.begin(), v_.end());
}

std::string Tensor::shape_str(const std::vector<int>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(dims_); }

}  // namespace privshield

#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "privshield/common.hpp"

namespace privshield {

// Dense row-major tensor of `real`. Image batches are NCHW, matrices [rows,
// cols], scalars shape {1}. Cheap value semantics; shapes at desk scale are
// small enough that copies are never the bottleneck.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims);
  Tensor(std::vector<int> dims, std::vector<real> values);
  static Tensor scalar(real v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.dims()); }

  const std::vector<int>& dims() const { return dims_; }
  int dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  real* data() { return v_.data(); }
  const real* data() const { return v_.data(); }
  real& operator[](std::size_t i) { return v_[i]; }
  real operator[](std::size_t i) const { return v_[i]; }

  real& at(std::initializer_list<int> idx);
  real at(std::initializer_list<int> idx) const;

  // Scalar value of a shape-{1} (or single-element) tensor.
  real item() const;

  void fill(real v);
  Tensor reshaped(std::vector<int> dims) const;

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  bool all_finite() const;
  real min() const;
  real max() const;

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& dims);

 private:
  std::size_t offset(std::initializer_list<int> idx) const;

  std::vector<int> dims_;
  std::vector<real> v_;
};

std::size_t shape_size(const std::vector<int>& dims);

}  // namespace privshield

#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "locnav/common.hpp"

namespace locnav {

// Network arithmetic type. Double by default so gradient checks are sharp;
// define LOCNAV_NN_FLOAT32 to trade precision for speed.
#ifdef LOCNAV_NN_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Dense row-major value container. The leading dimension is the batch
// wherever a batch exists.
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), Real(0)) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d < 0) throw ContractError("tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool empty() const { return data.empty(); }

  Real& operator[](size_t i) { return data[i]; }
  Real operator[](size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

inline void check_shape(const Tensor& t, const std::vector<int>& want, const char* where) {
  if (t.shape != want) {
    Tensor ref;
    ref.shape = want;
    throw ContractError(std::string(where) + ": expected shape " + ref.shape_str() + ", got " +
                        t.shape_str());
  }
}

}  // namespace locnav

#ifndef ORTHROS_ARRAY_HPP
#define ORTHROS_ARRAY_HPP

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "orthros/error.hpp"

namespace orthros {

// Dense row-major f64 array. Shapes are checked eagerly; any mismatch
// throws ShapeError naming both shapes.
struct Array {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Array() = default;

  explicit Array(std::vector<int64_t> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(checked_numel(shape)), fill);
  }

  static Array scalar(double v) {
    Array a(std::vector<int64_t>{});
    a.data.assign(1, v);
    return a;
  }

  static Array from(std::vector<int64_t> s, std::vector<double> d) {
    Array a;
    a.shape = std::move(s);
    a.data = std::move(d);
    if (checked_numel(a.shape) != static_cast<int64_t>(a.data.size())) {
      throw ShapeError("array data of size " + std::to_string(a.data.size()) +
                       " does not fill shape " + shape_str(a.shape));
    }
    return a;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // dim(-1) is the last axis.
  int64_t dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) {
      throw ShapeError("axis " + std::to_string(i) + " out of range for shape " + shape_str());
    }
    return shape[static_cast<size_t>(i)];
  }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  double& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * dim(1) + j)]; }
  double at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * dim(1) + j)]; }
  double& at3(int64_t b, int64_t i, int64_t j) {
    return data[static_cast<size_t>((b * dim(1) + i) * dim(2) + j)];
  }
  double at3(int64_t b, int64_t i, int64_t j) const {
    return data[static_cast<size_t>((b * dim(1) + i) * dim(2) + j)];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  std::string shape_str() const { return shape_str(shape); }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  static int64_t checked_numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw ShapeError("negative dim in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }
};

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace orthros

#endif

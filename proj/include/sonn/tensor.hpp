#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonn {

// Dense 4-D array in row-major [n][c][h][w] order, one contiguous buffer.
// float carries training and inference; the double instantiation exists for
// finite-difference checks where float rounding would drown the signal.
template <class T>
class Tensor4T {
 public:
  Tensor4T() = default;

  Tensor4T(int n, int c, int h, int w)
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("Tensor4: negative dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
  }

  int n() const noexcept { return n_; }
  int c() const noexcept { return c_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  T& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const noexcept {
    return data_[index(n, c, y, x)];
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  bool same_shape(const Tensor4T& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  bool all_finite() const noexcept {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

// out[i] = t[i]^q by repeated multiplication; exact for the small integer
// orders in play and never a transcendental call.
template <class T>
Tensor4T<T> elementwise_power(const Tensor4T<T>& t, int q) {
  if (q < 1)
    throw std::invalid_argument("elementwise_power: order must be >= 1, got " +
                                std::to_string(q));
  Tensor4T<T> out = t;
  for (int rep = 1; rep < q; ++rep) {
    T* o = out.data();
    const T* src = t.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= src[i];
  }
  return out;
}

template <class T>
Tensor4T<T> clip01(const Tensor4T<T>& t) {
  Tensor4T<T> out = t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v = out[i];
    if (v < T(0)) v = T(0);
    if (v > T(1)) v = T(1);
    out[i] = v;
  }
  return out;
}

// out[i] = a*x[i] + b*y[i]
template <class T>
Tensor4T<T> linear_combine(T a, const Tensor4T<T>& x, T b, const Tensor4T<T>& y) {
  if (!x.same_shape(y))
    throw std::invalid_argument("linear_combine: shape mismatch " +
                                x.shape_str() + " vs " + y.shape_str());
  Tensor4T<T> out = x;
  const T* yp = y.data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = a * o[i] + b * yp[i];
  return out;
}

template <class To, class From>
Tensor4T<To> tensor_cast(const Tensor4T<From>& t) {
  Tensor4T<To> out(t.n(), t.c(), t.h(), t.w());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

}  // namespace sonn

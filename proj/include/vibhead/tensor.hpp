#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <memory>
#include <new>
#include <utility>
#include <vector>

#include "vibhead/error.hpp"

namespace vibhead::nn {

struct Shape4 {
  std::size_t n = 1, c = 1, h = 1, w = 1;

  std::size_t count() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

namespace detail {

// 64-byte aligned storage. Eigen picks its vectorized head/tail split from the
// runtime address, so a fixed alignment is what makes reductions and products
// bit-reproducible across allocations. With `DefaultInit` value-initialization
// is a no-op, for outputs that are fully overwritten.
template <typename T, bool DefaultInit>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, DefaultInit>;
  };

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, DefaultInit>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  void construct(U* p) {
    if constexpr (DefaultInit)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U();
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const AlignedAllocator<U, DefaultInit>&) const noexcept {
    return true;
  }
};

}  // namespace detail

/// Aligned double vector used for every buffer handed to Eigen.
using Buffer = std::vector<double, detail::AlignedAllocator<double, false>>;

/// Dense NCHW tensor of doubles.
class Tensor4 {
 public:
  struct Uninitialized {};

  /// Contents are indeterminate; the caller must write every element.
  Tensor4(Shape4 shape, Uninitialized) : shape_(shape), data_(shape.count()) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
      fail(ErrorCode::ShapeMismatch, "tensor dims must be >= 1, got " + shape.str());
  }

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0) : shape_(shape), data_(shape.count(), fill) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
      fail(ErrorCode::ShapeMismatch, "tensor dims must be >= 1, got " + shape.str());
  }
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  /// Pointer to the (n, c) plane.
  double* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const double* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_{};
  std::vector<double, detail::AlignedAllocator<double, true>> data_;
};

}  // namespace vibhead::nn

#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace synthcp::nn {

// 64-byte aligned storage, so vectorized kernels see the same alignment on
// every run and produce bit-identical results.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

// NCHW shape. Vectors and scalars use trailing unit dimensions.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    bool positive() const { return n > 0 && c > 0 && h > 0 && w > 0; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
    Tensor(Shape shape, const std::vector<T>& data);
    Tensor(Shape shape, Buffer<T> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    Buffer<T>& storage() { return data_; }
    const Buffer<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // One NCHW image (all channels of batch entry n).
    std::span<T> image(int n) {
        const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
        return std::span<T>(data_).subspan(static_cast<std::size_t>(n) * len, len);
    }
    std::span<const T> image(int n) const {
        const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
        return std::span<const T>(data_).subspan(static_cast<std::size_t>(n) * len, len);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void reshape(Shape s);

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, Buffer<U>(data_.begin(), data_.end()));
    }

  private:
    Shape shape_{0, 0, 0, 0};
    Buffer<T> data_;
};

}  // namespace synthcp::nn

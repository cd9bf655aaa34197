#include "synthcp/nn/tensor.hpp"

#include <algorithm>

#include "synthcp/errors.hpp"

namespace synthcp::nn {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& data) : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data size does not match shape " + shape_.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data size does not match shape " + shape_.str());
}

template <typename T>
void Tensor<T>::reshape(Shape s) {
    if (s.size() != data_.size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    shape_ = s;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<int>;

}  // namespace synthcp::nn

#include "splitseg/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace splitseg {

std::size_t shape_volume(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_volume(shape_), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) {
    if (shape_volume(shape) != data.size()) {
        throw ShapeError("data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
    data_ = std::move(data);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = value;
    return t;
}

int Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank()));
    }
    return shape_[static_cast<std::size_t>(axis)];
}

float& Tensor::at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

float Tensor::at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

float& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

float Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_volume(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor QTensor::to_float() const {
    std::vector<float> data(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<float>(values[i]);
    return Tensor(shape, std::move(data));
}

}  // namespace splitseg

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "splitseg/errors.hpp"

namespace splitseg {

/// Dense float32 tensor, row-major. Feature maps are channels-first
/// (C x H x W). Reductions inside ops accumulate in double and store
/// float, which keeps results deterministic across runs and thread counts.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor full(std::vector<int> shape, float value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    // rank-3 (c, y, x) access
    float& at(int c, int y, int x);
    float at(int c, int y, int x) const;
    // rank-2 (row, col) access
    float& at(int r, int c);
    float at(int r, int c) const;

    /// Same data, new shape; element counts must match.
    Tensor reshaped(std::vector<int> shape) const;

    bool all_finite() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

/// Integer tensor holding quantized symbols.
struct QTensor {
    std::vector<int> shape;
    std::vector<int32_t> values;

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    Tensor to_float() const;

    bool operator==(const QTensor& other) const {
        return shape == other.shape && values == other.values;
    }
};

std::size_t shape_volume(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace splitseg

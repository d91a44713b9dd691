// Dense row-major tensor of doubles with shape metadata; the single value
// carrier between layers. product(shape) == data.size() by construction.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace erfact {

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) {
        return data_[i * shape_[1] + j];
    }
    double at(std::size_t i, std::size_t j) const {
        return data_[i * shape_[1] + j];
    }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    // Reuses the storage; the element count must not change.
    Tensor reshaped(std::vector<std::size_t> new_shape) && {
        if (checked_numel(new_shape) != data_.size()) {
            throw std::invalid_argument("reshape changes element count");
        }
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = std::move(data_);
        return t;
    }
    Tensor reshaped(std::vector<std::size_t> new_shape) const& {
        Tensor copy = *this;
        return std::move(copy).reshaped(std::move(new_shape));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw std::invalid_argument("zero tensor extent");
            n *= e;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace erfact

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sfim/core/error.hpp"

namespace sfim {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    // Empty until something accumulates into it; same length as value after.
    std::vector<double> grad;
    bool requires_grad = false;

    std::span<double> grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

} // namespace detail

// Dense row-major tensor of doubles. Copies share storage (handle semantics);
// use clone() for a deep copy. Features are laid out channels x height x width.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node().value.size(); }

    // rank-3 accessors
    std::size_t channels() const { return dim(0); }
    std::size_t height() const { return dim(1); }
    std::size_t width() const { return dim(2); }

    std::span<const double> values() const { return node().value; }
    std::span<double> mutable_values() { return node().value; }
    double at(std::size_t i) const { return node().value.at(i); }
    double item() const;

    bool requires_grad() const { return node().requires_grad; }
    Tensor& set_requires_grad(bool on = true);

    bool has_grad() const { return !node().grad.empty(); }
    // Zero-filled if nothing has accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad() { return node().grad_buffer(); }
    void zero_grad();

    Tensor clone() const;
    Tensor reshaped(Shape shape) const;

    detail::TensorNode& node() const;
    const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

bool all_finite(std::span<const double> values);
double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace sfim

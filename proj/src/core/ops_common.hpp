#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "sfim/core/ops.hpp"
#include "sfim/core/tape.hpp"

namespace sfim::ops::detail {

using NodePtr = std::shared_ptr<sfim::detail::TensorNode>;

inline void check_finite(std::string_view op, const Tensor& out) {
    if (!all_finite(out.values())) throw NumericError(std::string(op) + ": non-finite output");
}

inline void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

// Gradient sink for an input, or nullptr if it does not want one.
inline double* grad_sink(const NodePtr& n) { return n->requires_grad ? n->grad_buffer().data() : nullptr; }

} // namespace sfim::ops::detail

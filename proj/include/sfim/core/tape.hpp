#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string_view>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim {

// Ordered record of differentiable ops. Entries are appended in execution
// order, so the list is already topologically sorted; backward() walks it in
// reverse exactly once.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    struct Entry {
        std::string_view op;
        std::vector<std::shared_ptr<detail::TensorNode>> inputs;
        std::shared_ptr<detail::TensorNode> output;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
                BackwardFn fn);
    void record(std::string_view op, const std::vector<Tensor>& inputs, const Tensor& output, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and propagates into every requires_grad
    // tensor on the recorded path. Gradients accumulate into existing buffers.
    void backward(const Tensor& loss);

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    void clear();

private:
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

// Makes a tape the recording target for ops issued on this thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

// True when an op with these inputs must be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(const std::vector<Tensor>& inputs);

} // namespace sfim

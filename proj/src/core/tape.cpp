#include "sfim/core/tape.hpp"

#include <cassert>

namespace sfim {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    for (const Tensor* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

bool needs_grad(const std::vector<Tensor>& inputs) {
    if (!g_active_tape) return false;
    for (const Tensor& t : inputs) {
        if (t.defined() && t.requires_grad()) return true;
    }
    return false;
}

void Tape::record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
                  BackwardFn fn) {
    Entry e;
    e.op = op;
    for (const Tensor* t : inputs) {
        if (t && t->defined()) e.inputs.push_back(t->handle());
    }
    e.output = output.handle();
    e.output->requires_grad = true;
    e.backward = std::move(fn);
    entries_.push_back(std::move(e));
}

void Tape::record(std::string_view op, const std::vector<Tensor>& inputs, const Tensor& output, BackwardFn fn) {
    Entry e;
    e.op = op;
    for (const Tensor& t : inputs) {
        if (t.defined()) e.inputs.push_back(t.handle());
    }
    e.output = output.handle();
    e.output->requires_grad = true;
    e.backward = std::move(fn);
    entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
    }
    if (consumed_) throw Error("backward: tape already consumed");
    consumed_ = true;
    loss.node().grad_buffer()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        assert(it->output);
        // Nothing flowed into this output: contributes nothing upstream.
        if (it->output->grad.empty()) continue;
        it->backward();
    }
}

void Tape::clear() {
    entries_.clear();
    consumed_ = false;
}

} // namespace sfim

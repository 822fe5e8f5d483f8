#include "sfim/core/params.hpp"

#include <cmath>

namespace sfim {

Tensor ParameterStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("parameter registered twice: " + name);
    value.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, value});
    return value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].tensor;
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<Tensor> ParameterStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
}

ParamScope ParamScope::sub(const std::string& part) const { return ParamScope(*store_, name(part), *rng_); }

std::string ParamScope::name(const std::string& leaf) const { return prefix_.empty() ? leaf : prefix_ + "." + leaf; }

Tensor ParamScope::he_uniform(const std::string& leaf, Shape shape, std::size_t fan_in, double scale) {
    Tensor t(std::move(shape));
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
    for (double& v : t.mutable_values()) v = rng_->uniform(-bound, bound);
    return store_->add(name(leaf), t);
}

Tensor ParamScope::constant(const std::string& leaf, Shape shape, double value) {
    return store_->add(name(leaf), Tensor(std::move(shape), value));
}

} // namespace sfim

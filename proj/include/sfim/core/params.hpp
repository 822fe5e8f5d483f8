#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfim/core/rng.hpp"
#include "sfim/core/tensor.hpp"

namespace sfim {

// Named learnable tensors in registration order. Names are unique; the
// order is the serialization and optimizer order.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    // Registers a requires_grad tensor. Throws ConfigError on a duplicate name.
    Tensor add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t parameter_count() const;

    void zero_grad();
    std::vector<Tensor> tensors() const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Scoped name builder: ParamScope("enc1").sub("rdb0").name("w") == "enc1.rdb0.w".
class ParamScope {
public:
    ParamScope(ParameterStore& store, std::string prefix, Rng& rng) : store_(&store), prefix_(std::move(prefix)), rng_(&rng) {}

    ParamScope sub(const std::string& part) const;
    std::string name(const std::string& leaf) const;

    // He-uniform: U(-b, b), b = scale * sqrt(6 / fan_in).
    Tensor he_uniform(const std::string& leaf, Shape shape, std::size_t fan_in, double scale = 1.0);
    Tensor constant(const std::string& leaf, Shape shape, double value);

    ParameterStore& store() const { return *store_; }
    Rng& rng() const { return *rng_; }

private:
    ParameterStore* store_;
    std::string prefix_;
    Rng* rng_;
};

} // namespace sfim

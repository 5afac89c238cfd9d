#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

// Named parameters with matching gradient slots. Entries keep insertion
// order, which fixes initialization, Adam traversal, and checkpoint layout.
template <typename T>
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
    };

    Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape) {
        if (index_.count(name)) throw SchemaError("duplicate parameter '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, Tensor<T>(shape), Tensor<T>(shape)});
        return entries_.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& value(const std::string& name) { return at(name).value; }
    const Tensor<T>& value(const std::string& name) const { return at(name).value; }
    Tensor<T>& grad(const std::string& name) { return at(name).grad; }
    const Tensor<T>& grad(const std::string& name) const { return at(name).grad; }

    std::size_t size() const { return entries_.size(); }
    Entry& entry(std::size_t i) { return entries_[i]; }
    const Entry& entry(std::size_t i) const { return entries_[i]; }

    void zero_grads() {
        for (Entry& e : entries_) e.grad.zero();
    }

    void scale_grads(T s) {
        for (Entry& e : entries_)
            for (T& g : e.grad.data) g *= s;
    }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const Entry& e : entries_) n += e.value.numel();
        return n;
    }

private:
    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw SchemaError("unknown parameter '" + name + "'");
        return entries_[it->second];
    }
    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw SchemaError("unknown parameter '" + name + "'");
        return entries_[it->second];
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace flupre::nn

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dla/tensor.hpp"

namespace dla {

enum class ParamGroup { Backbone, Transformer };

// Named parameter tensors in stable registration order. All registration
// happens at model construction; graphs alias entry storage afterwards, so
// the entry list must not grow once forward passes begin.
template <typename T>
struct ParameterStore {
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        ParamGroup group;
    };
    std::vector<Entry> entries;
    std::map<std::string, int> index;

    int add(const std::string& name, Tensor<T> init, ParamGroup group) {
        if (index.count(name)) throw std::invalid_argument("duplicate parameter " + name);
        index[name] = static_cast<int>(entries.size());
        entries.push_back({name, std::move(init), group});
        return static_cast<int>(entries.size()) - 1;
    }
    int find(const std::string& name) const {
        auto it = index.find(name);
        return it == index.end() ? -1 : it->second;
    }
    Entry& at(int i) { return entries[i]; }
    const Entry& at(int i) const { return entries[i]; }
    int size() const { return static_cast<int>(entries.size()); }
    int64_t numel() const {
        int64_t n = 0;
        for (const Entry& e : entries) n += e.tensor.numel();
        return n;
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const Entry& e : entries) out.add(e.name, e.tensor.template cast<U>(), e.group);
        return out;
    }
};

struct AdamWConfig {
    double lr_transformer = 1e-4;
    double lr_backbone = 1e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay; bias-corrected moments; per-group learning rates.
template <typename T>
class AdamW {
public:
    AdamW(const AdamWConfig& cfg, const ParameterStore<T>& store) : cfg_(cfg) {
        for (const auto& e : store.entries) {
            m_.push_back(Tensor<T>::zeros(e.tensor.shape));
            v_.push_back(Tensor<T>::zeros(e.tensor.shape));
        }
    }

    void step(ParameterStore<T>& store, const std::vector<Tensor<T>>& grads) {
        if (static_cast<int>(grads.size()) != store.size())
            throw std::invalid_argument("optimizer: gradient list size mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (int i = 0; i < store.size(); ++i) {
            auto& e = store.at(i);
            double lr = e.group == ParamGroup::Backbone ? cfg_.lr_backbone
                                                        : cfg_.lr_transformer;
            const Tensor<T>& g = grads[i];
            if (g.shape != e.tensor.shape)
                throw std::invalid_argument("optimizer: gradient shape mismatch for " + e.name);
            for (size_t j = 0; j < e.tensor.data.size(); ++j) {
                double gj = g.data[j];
                double mj = cfg_.beta1 * m_[i].data[j] + (1 - cfg_.beta1) * gj;
                double vj = cfg_.beta2 * v_[i].data[j] + (1 - cfg_.beta2) * gj * gj;
                m_[i].data[j] = static_cast<T>(mj);
                v_[i].data[j] = static_cast<T>(vj);
                double mhat = mj / bc1;
                double vhat = vj / bc2;
                double p = e.tensor.data[j];
                p -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p);
                e.tensor.data[j] = static_cast<T>(p);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    AdamWConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    int64_t t_ = 0;
};

} // namespace dla

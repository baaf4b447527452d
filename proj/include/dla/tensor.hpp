#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dla/rng.hpp"

namespace dla {

// Dense row-major tensor of rank 1..4.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T(0));
    }
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("tensor data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int e : s) n *= e;
        return n;
    }
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        for (T& x : t.data) x = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[i]; }
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }

    T& at(int i) { return data[i]; }
    const T& at(int i) const { return data[i]; }
    T& at(int i, int j) { return data[static_cast<int64_t>(i) * shape[1] + j]; }
    const T& at(int i, int j) const { return data[static_cast<int64_t>(i) * shape[1] + j]; }
    T& at(int i, int j, int k) {
        return data[(static_cast<int64_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const T& at(int i, int j, int k) const {
        return data[(static_cast<int64_t>(i) * shape[1] + j) * shape[2] + k];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

std::string shape_str(const std::vector<int>& s);

// Reverse-mode tape. Build a fresh graph per forward pass; ops append nodes
// that hold values and a backward closure. Leaves may alias external storage
// (parameters) so no copy happens on registration.
template <typename T>
class Graph {
public:
    using Ref = int;

    // leaf whose value is copied in
    Ref input(Tensor<T> value, bool needs_grad = false);
    // leaf aliasing caller-owned storage that must outlive the graph
    Ref leaf(const Tensor<T>* value, bool needs_grad = true);
    // constant scalar [1]
    Ref scalar(T v);

    const Tensor<T>& val(Ref r) const { return nodes_[r].external ? *nodes_[r].external : nodes_[r].value; }
    const Tensor<T>& grad(Ref r) const { return nodes_[r].grad; }
    bool has_grad(Ref r) const { return nodes_[r].needs_grad; }

    // elementwise
    Ref add(Ref a, Ref b);        // same shape, or b a rank-1 row vector broadcast over rows
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);        // same shape
    Ref div(Ref a, Ref b);
    Ref minimum(Ref a, Ref b);    // grad to the selected side, ties favor a
    Ref maximum(Ref a, Ref b);
    Ref scale(Ref a, T s);
    Ref add_scalar(Ref a, T s);
    Ref clamp_min(Ref a, T lo);
    Ref abs(Ref a);
    Ref relu(Ref a);
    Ref gelu(Ref a);
    Ref sigmoid(Ref a);
    Ref inverse_sigmoid(Ref a);   // input clamped to [eps, 1-eps], eps = 1e-5
    Ref log(Ref a);

    // shape
    Ref reshape(Ref a, std::vector<int> shape);
    Ref slice_rows(Ref a, int begin, int end);
    Ref slice_cols(Ref a, int begin, int end);
    Ref concat_rows(const std::vector<Ref>& parts);
    Ref concat_cols(const std::vector<Ref>& parts);
    Ref gather_rows(Ref a, std::vector<int> idx);
    Ref repeat_rows(Ref a, int times); // [1,n] -> [times,n]

    // linear algebra ([m,k] inputs)
    Ref matmul(Ref a, Ref b);     // a[m,k] b[k,n]
    Ref matmul_nt(Ref a, Ref b);  // a[m,k] b[n,k] -> [m,n]
    Ref linear(Ref x, Ref w, Ref b); // x[m,k] w[k,n] bias[n]

    // reductions and normalizations
    Ref sum(Ref a);               // -> [1]
    Ref mean(Ref a);              // -> [1]
    Ref sum_rows(Ref a);          // [m,n] -> [m]
    Ref softmax(Ref a);           // last dim, max-subtracted
    Ref log_softmax(Ref a);
    Ref layer_norm(Ref a, Ref gamma, Ref beta, T eps = T(1e-5)); // last dim
    // mean over rows of -log softmax(logits)[target]; fused with log-softmax
    Ref cross_entropy(Ref logits, std::vector<int> targets);

    // structured ops
    // x[H,W,Cin], w[KH,KW,Cin,Cout], bias[Cout]; zero padding
    Ref conv2d(Ref x, Ref w, Ref b, int stride, int pad);
    // map[H,W,C], points[P,2] normalized to [0,1]; outside reads zero
    Ref bilinear_sample(Ref map, Ref points);
    // fused multi-scale deformable attention for one image:
    //   values: per level [H_l*W_l, heads*ch] flattened feature maps
    //   locations[Q, heads, L, P, 2] normalized sampling points
    //   weights[Q, heads, L*P] attention weights (already softmaxed)
    // -> [Q, heads*ch]
    Ref deform_attend(const std::vector<Ref>& values, const std::vector<std::pair<int, int>>& level_hw,
                      Ref locations, Ref weights, int heads);

    Ref detach(Ref a);

    void backward(Ref loss);
    void check_finite(Ref r, const std::string& context) const;

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        std::function<void()> back;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;

    Ref push(Tensor<T> value, bool needs_grad, std::function<void()> back = nullptr);
    Tensor<T>& gbuf(Ref r);
    friend struct GraphOps;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

// Central finite differences (64-bit, step h) against reverse-mode gradients.
// build receives a graph plus leaf refs for each parameter tensor and returns
// the scalar loss ref. Returns the max relative error over all elements,
// denominator max(|analytic|, |numeric|, 1).
double grad_check(
    const std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>& build,
    std::vector<Tensor<double>> params, double h = 1e-4);

// Same check restricted to at most max_per_tensor deterministically chosen
// elements of each parameter, for models too large to probe exhaustively.
double grad_check_sampled(
    const std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>& build,
    std::vector<Tensor<double>> params, int max_per_tensor, uint64_t pick_seed,
    double h = 1e-4);

} // namespace dla

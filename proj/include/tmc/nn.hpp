#pragma once

// Parameter registry, initialization, and the attention building blocks
// shared by the text encoder, the visual encoder, and the fusion module.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmc/tensor.hpp"

namespace tmc {

// Named trainable tensors in registration order. Registration order is the
// canonical parameter order for the optimizer and checkpoints.
class ParamStore {
  public:
    Tensor create(const std::string& name, Shape shape, std::vector<double> data) {
        if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
        Tensor t = Tensor::from(std::move(shape), std::move(data));
        t.set_requires_grad(true);
        index_[name] = names_.size();
        names_.push_back(name);
        params_.push_back(t);
        return t;
    }
    size_t size() const { return params_.size(); }
    const std::string& name(size_t i) const { return names_.at(i); }
    Tensor& param(size_t i) { return params_.at(i); }
    const Tensor& param(size_t i) const { return params_.at(i); }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
        return params_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.numel();
        return n;
    }

  private:
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
    std::unordered_map<std::string, size_t> index_;
};

// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases and shifts zero.
struct ParamInit {
    ParamStore& store;
    std::mt19937_64& rng;

    Tensor weight(const std::string& name, Shape shape, int fan_in) {
        double bound = std::sqrt(1.0 / fan_in);
        std::uniform_real_distribution<double> u(-bound, bound);
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : data) v = u(rng);
        return store.create(name, std::move(shape), std::move(data));
    }
    Tensor zeros(const std::string& name, Shape shape) {
        return store.create(name, shape,
                            std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
    }
    Tensor constant(const std::string& name, Shape shape, double v) {
        return store.create(name, shape,
                            std::vector<double>(static_cast<size_t>(shape_numel(shape)), v));
    }
};

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [1 x out]

    Linear() = default;
    Linear(ParamInit& init, const std::string& prefix, int in, int out)
        : w(init.weight(prefix + ".w", {in, out}, in)), b(init.zeros(prefix + ".b", {1, out})) {}

    Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
};

struct LayerNorm {
    Tensor gamma;  // [1 x d]
    Tensor beta;   // [1 x d]

    LayerNorm() = default;
    LayerNorm(ParamInit& init, const std::string& prefix, int d)
        : gamma(init.constant(prefix + ".g", {1, d}, 1.0)), beta(init.zeros(prefix + ".b", {1, d})) {}

    Tensor operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
};

// Position-wise feed-forward network, hidden width 4x.
struct Ffn {
    Linear fc1, fc2;

    Ffn() = default;
    Ffn(ParamInit& init, const std::string& prefix, int d)
        : fc1(init, prefix + ".fc1", d, 4 * d), fc2(init, prefix + ".fc2", 4 * d, d) {}

    Tensor operator()(const Tensor& x) const { return fc2(relu(fc1(x))); }
};

// Multi-head cross-attention: softmax(Q Wq (K Wk)^T / sqrt(d_k)) V Wv per
// head, heads concatenated, then Wo. Masked keys receive -inf logits.
struct MhcaParams {
    int heads = 1;
    int d_k = 0;
    Linear q, k, v, o;

    MhcaParams() = default;
    MhcaParams(ParamInit& init, const std::string& prefix, int d, int heads_)
        : heads(heads_),
          q(init, prefix + ".q", d, d),
          k(init, prefix + ".k", d, d),
          v(init, prefix + ".v", d, d),
          o(init, prefix + ".o", d, d) {
        if (heads_ < 1 || d % heads_ != 0)
            throw std::invalid_argument("config error: head count " + std::to_string(heads_) +
                                        " does not divide model dim " + std::to_string(d));
        d_k = d / heads_;
    }
};

using KeyMask = std::vector<uint8_t>;

inline Tensor mhca(const Tensor& query, const Tensor& key, const Tensor& value,
                   const MhcaParams& p, const std::optional<KeyMask>& key_mask = std::nullopt,
                   Tensor* attn_mean = nullptr) {
    int d = p.heads * p.d_k;
    if (query.dim(1) != d || key.dim(1) != d || value.dim(1) != d)
        throw std::invalid_argument("dimension error: mhca expects dim " + std::to_string(d) +
                                    ", got Q" + shape_str(query.shape()) + " K" +
                                    shape_str(key.shape()) + " V" + shape_str(value.shape()));
    if (key.dim(0) != value.dim(0))
        throw std::invalid_argument("dimension error: mhca key/value row mismatch");
    if (key_mask && static_cast<int>(key_mask->size()) != key.dim(0))
        throw std::invalid_argument("shape error: mhca key mask length");

    Tensor qp = p.q(query), kp = p.k(key), vp = p.v(value);
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
    std::vector<Tensor> head_outs;
    Tensor attn_acc;
    for (int h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(qp, h * p.d_k, (h + 1) * p.d_k);
        Tensor kh = slice_cols(kp, h * p.d_k, (h + 1) * p.d_k);
        Tensor vh = slice_cols(vp, h * p.d_k, (h + 1) * p.d_k);
        Tensor logits = scale(matmul(qh, transpose2d(kh)), inv_sqrt_dk);
        Tensor attn = key_mask ? softmax_rows_masked(logits, *key_mask) : softmax_rows(logits);
        if (attn_mean) attn_acc = h == 0 ? attn : add(attn_acc, attn);
        head_outs.push_back(matmul(attn, vh));
    }
    if (attn_mean) *attn_mean = scale(attn_acc, 1.0 / p.heads);
    return p.o(concat_cols(head_outs));
}

// Transformer block: residual attention, then pre-norm residual FFN.
//   h = x + attn(x); out = h + ffn(norm(h))
struct TransformerBlock {
    MhcaParams attn;
    LayerNorm norm;
    Ffn ffn;

    TransformerBlock() = default;
    TransformerBlock(ParamInit& init, const std::string& prefix, int d, int heads)
        : attn(init, prefix + ".attn", d, heads),
          norm(init, prefix + ".ln", d),
          ffn(init, prefix + ".ffn", d) {}

    Tensor operator()(const Tensor& x, const std::optional<KeyMask>& mask = std::nullopt) const {
        Tensor h = add(x, mhca(x, x, x, attn, mask));
        return add(h, ffn(norm(h)));
    }
};

}  // namespace tmc

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pktseer/common.hpp"
#include "pktseer/det_rng.hpp"

namespace pktseer::nn {

namespace detail {
struct Node;
}

// Dense float32 tensor participating in a dynamic reverse-mode graph. Value
// semantics on the handle; the node (values, grad, parents) is shared.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const;
    int64_t numel() const;
    int64_t dim(size_t i) const { return shape().at(i); }

    std::vector<float>& data();
    const std::vector<float>& data() const;
    std::vector<float>& grad();
    const std::vector<float>& grad() const;
    bool requires_grad() const;

    float item() const;  // defined for single-element tensors
    void zero_grad();

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> node_ptr() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
    std::vector<int64_t> shape;
    std::vector<float> value;
    std::vector<float> grad;  // sized lazily when the node participates in backward
    bool requires_grad = false;  // leaf flag
    bool needs_grad = false;     // this node or an ancestor is a leaf with requires_grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pulls node.grad into parents' grads

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    }
};
}  // namespace detail

// masks are shared so cached causal masks cost nothing per call;
// entry != 0 means "may attend"
using AttnMask = std::shared_ptr<const std::vector<uint8_t>>;

AttnMask causal_mask(int64_t n);
AttnMask full_mask(int64_t n, int64_t m);

// --- primitive ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k]x[k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k]x[m,k]^T -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor add_bias(const Tensor& a, const Tensor& b);   // [n,m] + broadcast [m]
Tensor scale(const Tensor& a, float c);
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// row-wise softmax; masked-out entries get -inf bias, every row must keep at
// least one allowed entry
Tensor softmax_rows(const Tensor& scores, const AttnMask& mask = nullptr);

Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& indices);
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

// inverted dropout; pass p=0 or rng=nullptr for identity
Tensor dropout(const Tensor& a, float p, DetRng* rng);

// mean over rows of -log softmax(logits)[target]; optional per-row weights
// divide by the row count, not the weight sum
Tensor nll_rows(const Tensor& logits, const std::vector<int32_t>& targets,
                const std::vector<float>* row_weights = nullptr);

// --- graph -------------------------------------------------------------------

// Reverse-mode pass from a scalar loss; gradients accumulate into every
// requires_grad leaf reachable from it.
void backward(const Tensor& loss);

}  // namespace pktseer::nn

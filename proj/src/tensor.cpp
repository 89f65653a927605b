#include "pktseer/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace pktseer::nn {

using detail::Node;
using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {

std::shared_ptr<Node> make_node(std::vector<int64_t> shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(n->numel()), 0.0f);
    return n;
}

std::shared_ptr<Node> make_op(std::vector<int64_t> shape,
                              std::vector<std::shared_ptr<Node>> parents) {
    auto n = make_node(std::move(shape));
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    return n;
}

void require(bool cond, const char* msg) {
    if (!cond) throw UsageError(msg);
}

ECMap mat(const Node& n) {
    require(n.shape.size() == 2, "expected a rank-2 tensor");
    return ECMap(n.value.data(), n.shape[0], n.shape[1]);
}

EMap grad_mat(Node& n) {
    n.ensure_grad();
    return EMap(n.grad.data(), n.shape[0], n.shape[1]);
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    auto n = make_node(std::move(shape));
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(n);
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data,
                         bool requires_grad) {
    auto n = make_node(std::move(shape));
    require(n->value.size() == data.size(), "from_data: size mismatch with shape");
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(n);
}

Tensor Tensor::scalar(float v) { return from_data({1}, {v}); }

const std::vector<int64_t>& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return node_->numel(); }
std::vector<float>& Tensor::data() { return node_->value; }
const std::vector<float>& Tensor::data() const { return node_->value; }
std::vector<float>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}
const std::vector<float>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}
bool Tensor::requires_grad() const { return node_->requires_grad; }

float Tensor::item() const {
    require(numel() == 1, "item(): tensor is not a scalar");
    return node_->value[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

// ---------------------------------------------------------------------------

AttnMask causal_mask(int64_t n) {
    auto m = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) (*m)[static_cast<size_t>(i * n + j)] = 1;
    return m;
}

AttnMask full_mask(int64_t n, int64_t m) {
    return std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n * m), 1);
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(0),
            "matmul: shape mismatch");
    auto n = make_op({a.dim(0), b.dim(1)}, {a.node_ptr(), b.node_ptr()});
    EMap(n->value.data(), n->shape[0], n->shape[1]).noalias() =
        mat(*a.node()) * mat(*b.node());
    if (n->needs_grad) {
        n->backprop = [](Node& self) {
            Node& A = *self.parents[0];
            Node& B = *self.parents[1];
            ECMap dC(self.grad.data(), self.shape[0], self.shape[1]);
            if (A.needs_grad) grad_mat(A).noalias() += dC * mat(B).transpose();
            if (B.needs_grad) grad_mat(B).noalias() += mat(A).transpose() * dC;
        };
    }
    return Tensor(n);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(1),
            "matmul_nt: shape mismatch");
    auto n = make_op({a.dim(0), b.dim(0)}, {a.node_ptr(), b.node_ptr()});
    EMap(n->value.data(), n->shape[0], n->shape[1]).noalias() =
        mat(*a.node()) * mat(*b.node()).transpose();
    if (n->needs_grad) {
        n->backprop = [](Node& self) {
            Node& A = *self.parents[0];
            Node& B = *self.parents[1];
            ECMap dC(self.grad.data(), self.shape[0], self.shape[1]);
            if (A.needs_grad) grad_mat(A).noalias() += dC * mat(B);
            if (B.needs_grad) grad_mat(B).noalias() += dC.transpose() * mat(A);
        };
    }
    return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    auto n = make_op(a.shape(), {a.node_ptr(), b.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = a.data()[i] + b.data()[i];
    if (n->needs_grad) {
        n->backprop = [](Node& self) {
            for (auto& p : self.parents) {
                if (!p->needs_grad) continue;
                p->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor(n);
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 1 && a.dim(1) == b.dim(0),
            "add_bias: shape mismatch");
    auto n = make_op(a.shape(), {a.node_ptr(), b.node_ptr()});
    int64_t rows = a.dim(0), cols = a.dim(1);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
            n->value[static_cast<size_t>(r * cols + c)] =
                a.data()[static_cast<size_t>(r * cols + c)] + b.data()[static_cast<size_t>(c)];
    if (n->needs_grad) {
        n->backprop = [rows, cols](Node& self) {
            Node& A = *self.parents[0];
            Node& B = *self.parents[1];
            if (A.needs_grad) {
                A.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
            }
            if (B.needs_grad) {
                B.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c)
                        B.grad[static_cast<size_t>(c)] +=
                            self.grad[static_cast<size_t>(r * cols + c)];
            }
        };
    }
    return Tensor(n);
}

Tensor scale(const Tensor& a, float c) {
    auto n = make_op(a.shape(), {a.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * c;
    if (n->needs_grad) {
        n->backprop = [c](Node& self) {
            Node& A = *self.parents[0];
            if (!A.needs_grad) return;
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * c;
        };
    }
    return Tensor(n);
}

Tensor gelu(const Tensor& a) {
    auto n = make_op(a.shape(), {a.node_ptr()});
    constexpr float inv_sqrt2 = 0.7071067811865476f;
    for (size_t i = 0; i < n->value.size(); ++i) {
        float x = a.data()[i];
        n->value[i] = 0.5f * x * (1.0f + std::erf(x * inv_sqrt2));
    }
    if (n->needs_grad) {
        n->backprop = [](Node& self) {
            Node& A = *self.parents[0];
            if (!A.needs_grad) return;
            A.ensure_grad();
            constexpr float inv_sqrt2 = 0.7071067811865476f;
            constexpr float inv_sqrt2pi = 0.3989422804014327f;
            for (size_t i = 0; i < self.grad.size(); ++i) {
                float x = A.value[i];
                float cdf = 0.5f * (1.0f + std::erf(x * inv_sqrt2));
                float pdf = inv_sqrt2pi * std::exp(-0.5f * x * x);
                A.grad[i] += self.grad[i] * (cdf + x * pdf);
            }
        };
    }
    return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    require(x.shape().size() == 2 && gain.shape().size() == 1 && bias.shape().size() == 1 &&
                gain.dim(0) == x.dim(1) && bias.dim(0) == x.dim(1),
            "layer_norm: shape mismatch");
    int64_t rows = x.dim(0), cols = x.dim(1);
    auto n = make_op(x.shape(), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()});

    // keep normalized values for the backward pass
    auto xhat = std::make_shared<std::vector<float>>(x.data().size());
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const float* xv = x.data().data() + r * cols;
        double mean = 0;
        for (int64_t c = 0; c < cols; ++c) mean += xv[c];
        mean /= static_cast<double>(cols);
        double var = 0;
        for (int64_t c = 0; c < cols; ++c) {
            double d = xv[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
        (*inv_std)[static_cast<size_t>(r)] = istd;
        for (int64_t c = 0; c < cols; ++c) {
            float h = (xv[c] - static_cast<float>(mean)) * istd;
            (*xhat)[static_cast<size_t>(r * cols + c)] = h;
            n->value[static_cast<size_t>(r * cols + c)] =
                h * gain.data()[static_cast<size_t>(c)] + bias.data()[static_cast<size_t>(c)];
        }
    }
    if (n->needs_grad) {
        n->backprop = [rows, cols, xhat, inv_std](Node& self) {
            Node& X = *self.parents[0];
            Node& G = *self.parents[1];
            Node& B = *self.parents[2];
            if (G.needs_grad) {
                G.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c)
                        G.grad[static_cast<size_t>(c)] +=
                            self.grad[static_cast<size_t>(r * cols + c)] *
                            (*xhat)[static_cast<size_t>(r * cols + c)];
            }
            if (B.needs_grad) {
                B.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cols; ++c)
                        B.grad[static_cast<size_t>(c)] +=
                            self.grad[static_cast<size_t>(r * cols + c)];
            }
            if (X.needs_grad) {
                X.ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    const float* dy = self.grad.data() + r * cols;
                    const float* h = xhat->data() + r * cols;
                    const float* g = G.value.data();
                    double sum_dg = 0, sum_dgh = 0;
                    for (int64_t c = 0; c < cols; ++c) {
                        double dg = static_cast<double>(dy[c]) * g[c];
                        sum_dg += dg;
                        sum_dgh += dg * h[c];
                    }
                    float istd = (*inv_std)[static_cast<size_t>(r)];
                    float inv_n = 1.0f / static_cast<float>(cols);
                    for (int64_t c = 0; c < cols; ++c) {
                        float dg = dy[c] * g[c];
                        X.grad[static_cast<size_t>(r * cols + c)] +=
                            istd * (dg - inv_n * static_cast<float>(sum_dg) -
                                    h[c] * inv_n * static_cast<float>(sum_dgh));
                    }
                }
            }
        };
    }
    return Tensor(n);
}

Tensor softmax_rows(const Tensor& scores, const AttnMask& mask) {
    require(scores.shape().size() == 2, "softmax_rows: expected rank-2");
    int64_t rows = scores.dim(0), cols = scores.dim(1);
    if (mask)
        require(mask->size() == static_cast<size_t>(rows * cols),
                "softmax_rows: mask size mismatch");
    auto n = make_op(scores.shape(), {scores.node_ptr()});
    for (int64_t r = 0; r < rows; ++r) {
        const float* s = scores.data().data() + r * cols;
        const uint8_t* mk = mask ? mask->data() + r * cols : nullptr;
        float mx = -std::numeric_limits<float>::infinity();
        for (int64_t c = 0; c < cols; ++c)
            if ((!mk || mk[c]) && s[c] > mx) mx = s[c];
        require(std::isfinite(mx), "softmax_rows: row has no unmasked entries");
        double denom = 0;
        float* out = n->value.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) {
            float e = (!mk || mk[c]) ? std::exp(s[c] - mx) : 0.0f;
            out[c] = e;
            denom += e;
        }
        float inv = static_cast<float>(1.0 / denom);
        for (int64_t c = 0; c < cols; ++c) out[c] *= inv;
    }
    if (n->needs_grad) {
        n->backprop = [rows, cols](Node& self) {
            Node& S = *self.parents[0];
            if (!S.needs_grad) return;
            S.ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const float* p = self.value.data() + r * cols;
                const float* dy = self.grad.data() + r * cols;
                double dot = 0;
                for (int64_t c = 0; c < cols; ++c) dot += static_cast<double>(p[c]) * dy[c];
                for (int64_t c = 0; c < cols; ++c)
                    S.grad[static_cast<size_t>(r * cols + c)] +=
                        p[c] * (dy[c] - static_cast<float>(dot));
            }
        };
    }
    return Tensor(n);
}

Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& indices) {
    require(a.shape().size() == 2, "gather_rows: expected rank-2");
    int64_t cols = a.dim(1);
    for (int32_t idx : indices)
        require(idx >= 0 && idx < a.dim(0), "gather_rows: index out of range");
    auto n = make_op({static_cast<int64_t>(indices.size()), cols}, {a.node_ptr()});
    for (size_t r = 0; r < indices.size(); ++r)
        std::copy_n(a.data().data() + static_cast<size_t>(indices[r]) * cols, cols,
                    n->value.data() + r * cols);
    if (n->needs_grad) {
        auto idx = std::make_shared<std::vector<int32_t>>(indices);
        n->backprop = [idx, cols](Node& self) {
            Node& A = *self.parents[0];
            if (!A.needs_grad) return;
            A.ensure_grad();
            for (size_t r = 0; r < idx->size(); ++r) {
                float* dst = A.grad.data() + static_cast<size_t>((*idx)[r]) * cols;
                const float* src = self.grad.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
            }
        };
    }
    return Tensor(n);
}

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
    require(a.shape().size() == 2 && 0 <= c0 && c0 < c1 && c1 <= a.dim(1),
            "slice_cols: bad range");
    int64_t rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
    auto n = make_op({rows, w}, {a.node_ptr()});
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(a.data().data() + r * cols + c0, w, n->value.data() + r * w);
    if (n->needs_grad) {
        n->backprop = [rows, cols, c0, w](Node& self) {
            Node& A = *self.parents[0];
            if (!A.needs_grad) return;
            A.ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < w; ++c)
                    A.grad[static_cast<size_t>(r * cols + c0 + c)] +=
                        self.grad[static_cast<size_t>(r * w + c)];
        };
    }
    return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    int64_t rows = parts[0].dim(0), total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        require(p.shape().size() == 2 && p.dim(0) == rows, "concat_cols: shape mismatch");
        total += p.dim(1);
        parents.push_back(p.node_ptr());
    }
    auto n = make_op({rows, total}, std::move(parents));
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t w = p.dim(1);
        for (int64_t r = 0; r < rows; ++r)
            std::copy_n(p.data().data() + r * w, w, n->value.data() + r * total + off);
        off += w;
    }
    if (n->needs_grad) {
        n->backprop = [rows, total](Node& self) {
            int64_t off = 0;
            for (auto& p : self.parents) {
                int64_t w = p->shape[1];
                if (p->needs_grad) {
                    p->ensure_grad();
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < w; ++c)
                            p->grad[static_cast<size_t>(r * w + c)] +=
                                self.grad[static_cast<size_t>(r * total + off + c)];
                }
                off += w;
            }
        };
    }
    return Tensor(n);
}

Tensor dropout(const Tensor& a, float p, DetRng* rng) {
    if (p <= 0.0f || rng == nullptr) return a;
    require(p < 1.0f, "dropout: p must be < 1");
    auto n = make_op(a.shape(), {a.node_ptr()});
    auto keep = std::make_shared<std::vector<uint8_t>>(a.data().size());
    float inv_keep = 1.0f / (1.0f - p);
    for (size_t i = 0; i < n->value.size(); ++i) {
        bool k = !rng->bernoulli(p);
        (*keep)[i] = k;
        n->value[i] = k ? a.data()[i] * inv_keep : 0.0f;
    }
    if (n->needs_grad) {
        n->backprop = [keep, inv_keep](Node& self) {
            Node& A = *self.parents[0];
            if (!A.needs_grad) return;
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if ((*keep)[i]) A.grad[i] += self.grad[i] * inv_keep;
        };
    }
    return Tensor(n);
}

Tensor nll_rows(const Tensor& logits, const std::vector<int32_t>& targets,
                const std::vector<float>* row_weights) {
    require(logits.shape().size() == 2, "nll_rows: expected rank-2 logits");
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    require(static_cast<size_t>(rows) == targets.size(), "nll_rows: target count mismatch");
    if (row_weights)
        require(row_weights->size() == targets.size(), "nll_rows: weight count mismatch");
    for (int32_t t : targets)
        require(t >= 0 && t < cols, "nll_rows: target id out of range");
    require(rows > 0, "nll_rows: empty batch");

    auto n = make_op({1}, {logits.node_ptr()});
    auto probs = std::make_shared<std::vector<float>>(logits.data().size());
    double total = 0;
    for (int64_t r = 0; r < rows; ++r) {
        const float* l = logits.data().data() + r * cols;
        float mx = l[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, l[c]);
        double denom = 0;
        for (int64_t c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(l[c] - mx));
        double log_denom = std::log(denom);
        for (int64_t c = 0; c < cols; ++c)
            (*probs)[static_cast<size_t>(r * cols + c)] =
                static_cast<float>(std::exp(static_cast<double>(l[c] - mx)) / denom);
        double nll = log_denom - static_cast<double>(l[targets[static_cast<size_t>(r)]] - mx);
        total += nll * (row_weights ? (*row_weights)[static_cast<size_t>(r)] : 1.0);
    }
    n->value[0] = static_cast<float>(total / static_cast<double>(rows));

    if (n->needs_grad) {
        auto tgt = std::make_shared<std::vector<int32_t>>(targets);
        auto wts = row_weights ? std::make_shared<std::vector<float>>(*row_weights) : nullptr;
        n->backprop = [probs, tgt, wts, rows, cols](Node& self) {
            Node& L = *self.parents[0];
            if (!L.needs_grad) return;
            L.ensure_grad();
            float upstream = self.grad[0];
            float inv_rows = 1.0f / static_cast<float>(rows);
            for (int64_t r = 0; r < rows; ++r) {
                float w = wts ? (*wts)[static_cast<size_t>(r)] : 1.0f;
                float coeff = upstream * inv_rows * w;
                const float* p = probs->data() + r * cols;
                float* g = L.grad.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) g[c] += coeff * p[c];
                g[(*tgt)[static_cast<size_t>(r)]] -= coeff;
            }
        };
    }
    return Tensor(n);
}

void backward(const Tensor& loss) {
    require(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar");
    Node* root = loss.node();

    // reverse topological order via iterative DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* next = node->parents[child++].get();
            if (next->needs_grad && !seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

}  // namespace pktseer::nn

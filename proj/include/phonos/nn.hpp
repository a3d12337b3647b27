#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace phonos::nn {

// Reverse-mode autodiff over small dense tensors (double precision). Each op
// returns a fresh node holding its inputs; backward() walks the graph once in
// reverse topological order. Ops verify their outputs are finite and raise a
// numeric error otherwise.

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad; // allocated lazily, same size as values
    bool requires_grad = false;
    bool backward_done = false;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    size_t count() const { return values.size(); }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }
    void ensure_grad() {
        if (grad.size() != values.size())
            grad.assign(values.size(), 0.0);
    }
};

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_scalar(double v);

// Populates .grad on every reachable tensor with requires_grad. Raises on a
// non-scalar loss and on a second backward over the same graph.
void backward(const TensorPtr& loss);

// Elementwise and linear-algebra primitives.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& bias); // bias broadcast over rows
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr sum(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& x);    // exact erf form
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                    double eps = 1e-5);
TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b);
TensorPtr embedding(const TensorPtr& table, const std::vector<int32_t>& ids);

// out[t,d] = bias[d] + sum_i w[d,i] * x[t-k+1+i, d], zero-padded on the left;
// frame t never sees inputs beyond t.
TensorPtr causal_depthwise_conv(const TensorPtr& x, const TensorPtr& w,
                                const TensorPtr& bias);

struct ContextWindow {
    int past_frames = 25;  // 500 ms at 50 Hz
    int future_frames = 2; // 40 ms at 50 Hz
};

// Softmax attention where query t attends to keys in
// [t - past, t + future] ∩ [0, T); q, k, v are already projected (T x D).
TensorPtr banded_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                           int heads, ContextWindow window);

// Losses fused with softmax for stable gradients.
TensorPtr ce_loss(const TensorPtr& logits, const std::vector<int32_t>& frame_targets);
// Log-space forward algorithm over the blank-interleaved label sequence;
// raises when T < L + adjacent-repeat count.
TensorPtr ctc_loss(const TensorPtr& logits, const std::vector<int32_t>& target,
                   int blank_id);

// Named parameter store with deterministic seeded init: weights are centered
// uniform scaled by 1/sqrt(fan_in); biases zero; layernorm gains one.
class ParameterSet {
  public:
    TensorPtr add_weight(const std::string& name, std::vector<int> shape, int fan_in);
    TensorPtr add_zeros(const std::string& name, std::vector<int> shape);
    TensorPtr add_ones(const std::string& name, std::vector<int> shape);
    TensorPtr get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, TensorPtr>>& entries() const {
        return entries_;
    }
    size_t total_count() const;
    void zero_grad();
    void set_seed(uint64_t seed) { seed_ = seed; }

  private:
    TensorPtr insert(const std::string& name, TensorPtr t);
    std::vector<std::pair<std::string, TensorPtr>> entries_;
    std::unordered_map<std::string, size_t> index_;
    uint64_t seed_ = 0;
    uint64_t init_counter_ = 0;
};

// Composed blocks. Parameters are fetched from the set by prefix.

// prefix.dw_w (D x k), prefix.dw_b, prefix.ln_g, prefix.ln_b,
// prefix.p1_w (D x 4D), prefix.p1_b, prefix.p2_w (4D x D), prefix.p2_b
TensorPtr convnext_block(const TensorPtr& x, const ParameterSet& params,
                         const std::string& prefix, int kernel);

// Full pre-norm transformer layer: banded self-attention sublayer then MLP
// sublayer, each with a residual. prefix.ln1_*, .wq/.bq/.wk/.bk/.wv/.bv/.wo/.bo,
// prefix.ln2_*, .w1/.b1 (D x 4D), .w2/.b2 (4D x D)
TensorPtr windowed_attention(const TensorPtr& x, const ParameterSet& params,
                             const std::string& prefix, int heads,
                             ContextWindow window);

// out = g * deep + (1 - g) * skip, g = sigmoid(concat(deep, skip) * W + b).
// prefix.w (2D x D), prefix.b (D)
TensorPtr gated_skip(const TensorPtr& deep, const TensorPtr& skip,
                     const ParameterSet& params, const std::string& prefix);

// Checkpoint: text header "PHN-CKPT v1", echoed config lines, then named
// little-endian float32 blobs with shapes.
void write_checkpoint(const std::string& path, const ParameterSet& params,
                      const std::vector<std::pair<std::string, std::string>>& config);
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, std::vector<int>>> shapes;
    std::unordered_map<std::string, std::vector<double>> blobs;
};
Checkpoint read_checkpoint(const std::string& path);
// Copies blob values into an already-built ParameterSet (shapes must match).
void load_into(const Checkpoint& ckpt, ParameterSet& params);

} // namespace phonos::nn

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pairdiff/tensor.hpp"

namespace pairdiff {

// A learnable tensor. Modules own their Params; the Graph copies values in
// when a leaf is created and accumulates gradients back after backward().
struct Param {
    Tensor value;
    Tensor grad;

    explicit Param(Tensor v = Tensor()) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad.fill(0.0); }
};

using Var = int;

// Define-by-run reverse-mode tape over Tensors. Rebuilt every step; forward
// values are computed eagerly as ops are added, backward() replays the tape
// in reverse. Ops cover exactly what the denoisers, trainer and segmenter
// need (NCHW convs, pooling, gates, the spectral filter, reductions).
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Graph&)> backward;
    };

    // Leaves -------------------------------------------------------------
    Var input(Tensor value);              // constant, no gradient
    Var param(Param& p);                  // learnable leaf tied to p
    Var leaf_with_grad(Tensor value);     // gradient-tracked non-param leaf

    // Elementwise --------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var silu(Var a);
    Var sigmoid(Var a);
    Var clamp(Var a, double lo, double hi);

    // y = bias + s * x with one scalar s_b per leading-dim slice; bias is a
    // constant tensor. Used for per-sample x0 estimates inside the loss.
    Var per_sample_affine(Var x, const std::vector<double>& scale, Tensor bias);

    // Linear algebra -----------------------------------------------------
    // x: (N, D), w: (O, D), b: (O) -> (N, O)
    Var linear(Var x, Var w, Var b);

    // Per-(sample, group) normalization with learnable per-channel affine.
    // x: (N,C,H,W), gamma/beta: (C)
    Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);

    // Convolutions (NCHW). kernel k in {1,3}, padding k/2, stride in {1,2}.
    // x: (N,C,H,W), w: (O,C,k,k), b: (O)
    Var conv2d(Var x, Var w, Var b, int stride = 1);

    Var avg_pool2(Var x);           // 2x2 mean, stride 2
    Var upsample_nearest2(Var x);   // nearest-neighbour x2

    // Structure ----------------------------------------------------------
    Var concat(const std::vector<Var>& xs);  // along dim 1 (channels/features)
    Var global_avg_pool(Var x);              // (N,C,H,W) -> (N,C)
    Var channel_mean_max(Var x);             // (N,C,H,W) -> (N,2,H,W)
    Var mul_channel_gate(Var x, Var gate);   // gate (N,C) broadcast over H,W
    Var add_channel_bias(Var x, Var bias);   // bias (N,C) broadcast over H,W
    Var mul_spatial_gate(Var x, Var gate);   // gate (N,1,H,W) broadcast over C

    // Spectral filter: per-sample frequency gains applied to constant images.
    // images: (N,1,H,W) constant tensor; gains: (N,H,W) tracked Var.
    Var freq_filter(Tensor images, Var gains);

    // Gains from the two filter scalars: params (N,2) in [0,1] -> (N,H,W).
    Var lowpass_gains(Var params, int height, int width);

    // Reductions ---------------------------------------------------------
    Var mse(Var pred, Var target);     // scalar (1)
    Var sum_scaled(const std::vector<Var>& xs, const std::vector<double>& weights);

    // Execution ----------------------------------------------------------
    void backward(Var loss);
    const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v)].grad; }
    void clear();
    size_t node_count() const { return nodes_.size(); }

private:
    Var make_node(Tensor value, bool needs_grad, std::function<void(Graph&)> backward);
    Node& node(Var v) { return nodes_[static_cast<size_t>(v)]; }
    void ensure_grad(Var v);

    std::vector<Node> nodes_;
    std::vector<std::pair<Var, Param*>> param_links_;
};

}  // namespace pairdiff

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pairdiff/embedding.hpp"
#include "pairdiff/graph.hpp"
#include "pairdiff/rng.hpp"
#include "pairdiff/schedule.hpp"
#include "pairdiff/spectral.hpp"

namespace pairdiff {

struct DenoiserConfig {
    int base_channels = 32;
    int cond_channels = 16;  // conditional-encoder base width
    int depth = 3;           // down/up stages
    int modality_count = 3;  // n
    int image_size = 32;     // 128 for the medical setting
    int temb_dim = 64;
    int controller_hidden = 32;
    int norm_groups = 8;

    void validate() const;
};

// -----------------------------------------------------------------------
// Layer modules. Each owns its Params and knows how to splice itself into a
// Graph; named_params feeds the optimizer and the checkpoint writer.
// -----------------------------------------------------------------------

using NamedParams = std::vector<std::pair<std::string, Param*>>;

struct ConvLayer {
    Param w, b;
    int stride = 1;

    static ConvLayer create(int in_ch, int out_ch, int kernel, Rng& rng, int stride = 1,
                            bool zero_init = false);
    Var build(Graph& g, Var x) { return g.conv2d(x, g.param(w), g.param(b), stride); }
    void collect(const std::string& prefix, NamedParams& out);
};

struct LinearLayer {
    Param w, b;

    static LinearLayer create(int in_dim, int out_dim, Rng& rng, bool zero_init = false);
    Var build(Graph& g, Var x) { return g.linear(x, g.param(w), g.param(b)); }
    void collect(const std::string& prefix, NamedParams& out);
};

struct NormLayer {
    Param gamma, beta;
    int groups = 8;

    static NormLayer create(int channels, int groups);
    Var build(Graph& g, Var x) { return g.group_norm(x, g.param(gamma), g.param(beta), groups); }
    void collect(const std::string& prefix, NamedParams& out);
};

// conv -> norm -> +t-projection -> silu -> conv -> norm -> silu
struct ConvBlock {
    ConvLayer c1, c2;
    NormLayer n1, n2;
    LinearLayer temb_proj;

    static ConvBlock create(int in_ch, int out_ch, int temb_dim, int groups, Rng& rng);
    Var build(Graph& g, Var x, Var temb);
    void collect(const std::string& prefix, NamedParams& out);
};

// Timestep-aware CBAM: channel gate from [pooled features ; t-embedding],
// spatial gate from the channel-pooled mean/max maps. Gates stay in (0,1)
// through the sigmoid.
struct TimestepCbam {
    LinearLayer channel_l1, channel_l2;
    ConvLayer spatial_conv;
    int channels = 0;

    // zero_gates=true zero-initializes the gate-emitting layers (gates 0.5).
    static TimestepCbam create(int channels, int temb_dim, Rng& rng, bool zero_gates = true);
    Var build(Graph& g, Var features, Var temb);
    void collect(const std::string& prefix, NamedParams& out);
};

Tensor cbam_forward(const Tensor& features, const Tensor& temb_batch, TimestepCbam& block);

// Trainable twin of spectral.hpp's FilterController.
struct ControllerModule {
    LinearLayer l1, l2;

    static ControllerModule create(int temb_dim, int hidden, Rng& rng);
    Var build_params(Graph& g, Var temb);  // (N,2) in (0,1)
    FilterParams emit(const Tensor& embedding) const;
    FilterController to_plain() const;
    void collect(const std::string& prefix, NamedParams& out);
};

// Conditional encoder: image -> bottleneck latent.
struct CondEncoder {
    ConvLayer inc;
    std::vector<ConvBlock> blocks;
    int out_channels = 0;

    static CondEncoder create(const DenoiserConfig& cfg, Rng& rng);
    Var build(Graph& g, Var x, Var temb);
    void collect(const std::string& prefix, NamedParams& out);
};

// One per-modality noise-prediction network: encoder-decoder with skip
// connections, n-1 conditional encoders behind per-condition spectral
// filters, fused at the bottleneck through the timestep CBAM.
struct DenoiserNet {
    DenoiserConfig cfg;
    LinearLayer temb_mlp;
    ConvLayer inc;
    std::vector<ConvBlock> down;
    std::vector<CondEncoder> cond_encoders;
    std::vector<ControllerModule> controllers;
    TimestepCbam cbam;
    ConvLayer fuse;
    std::vector<ConvBlock> up;
    ConvLayer out_conv;

    static DenoiserNet create(const DenoiserConfig& cfg, Rng& rng);

    // conditions are constant inputs; ts has one timestep per batch row.
    // sever zeroes the conditional latents (the Fig-3a-style ablation).
    Var build_eps(Graph& g, Tensor x_t, const std::vector<Tensor>& conditions,
                  const std::vector<int>& ts, bool sever = false);
    void collect(const std::string& prefix, NamedParams& out);
};

struct CoupledModelSet {
    DenoiserConfig cfg;
    std::vector<DenoiserNet> nets;
    bool sever_conditions = false;

    static CoupledModelSet create(const DenoiserConfig& cfg, Rng& rng);
    NamedParams named_params();
    size_t param_count();
};

// Batched single-image embedding matrix for a list of timesteps.
Tensor temb_batch_for(const std::vector<int>& ts, int dim);

// eps prediction for modality k given the other modalities' images.
// Images are (H,W); a batch dimension is added internally.
Tensor denoiser_forward(const Tensor& x_t, const std::vector<Tensor>& conditions, int t, int k,
                        CoupledModelSet& models);

// Exact conjugate-Gaussian denoiser used to validate samplers without
// training: x0 ~ N(mu, sigma2 I) elementwise.
struct AnalyticGaussianDenoiser {
    Tensor mu;
    double sigma2 = 0.0;
};

// Posterior mean of x0 given x_t under the Gaussian prior.
Tensor oracle_posterior_mean(const Tensor& x_t, int t, const AnalyticGaussianDenoiser& oracle,
                             const NoiseSchedule& schedule);

Tensor oracle_eps(const Tensor& x_t, int t, const AnalyticGaussianDenoiser& oracle,
                  const NoiseSchedule& schedule);

}  // namespace pairdiff

#include "pairdiff/nets.hpp"

#include <cmath>

#include "pairdiff/errors.hpp"

namespace pairdiff {

void DenoiserConfig::validate() const {
    if (base_channels < 1 || cond_channels < 1) throw ParameterError("DenoiserConfig: channels must be positive");
    if (depth < 1) throw ParameterError("DenoiserConfig: depth must be >= 1");
    if (modality_count < 1) throw ParameterError("DenoiserConfig: modality_count must be >= 1");
    if (temb_dim <= 0 || temb_dim % 2 != 0) throw ParameterError("DenoiserConfig: temb_dim must be even and positive");
    const int div = 1 << depth;
    if (image_size % div != 0)
        throw ParameterError("DenoiserConfig: image_size " + std::to_string(image_size) +
                             " not divisible by 2^depth = " + std::to_string(div));
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

ConvLayer ConvLayer::create(int in_ch, int out_ch, int kernel, Rng& rng, int stride, bool zero_init) {
    ConvLayer l;
    l.stride = stride;
    l.w = Param(Tensor({out_ch, in_ch, kernel, kernel}));
    l.b = Param(Tensor({out_ch}));
    if (!zero_init) {
        const double s = std::sqrt(2.0 / (in_ch * kernel * kernel));
        for (size_t i = 0; i < l.w.value.size(); ++i) l.w.value[i] = s * rng.normal();
    }
    return l;
}

void ConvLayer::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

LinearLayer LinearLayer::create(int in_dim, int out_dim, Rng& rng, bool zero_init) {
    LinearLayer l;
    l.w = Param(Tensor({out_dim, in_dim}));
    l.b = Param(Tensor({out_dim}));
    if (!zero_init) {
        const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (size_t i = 0; i < l.w.value.size(); ++i) l.w.value[i] = s * rng.normal();
    }
    return l;
}

void LinearLayer::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

NormLayer NormLayer::create(int channels, int groups) {
    NormLayer l;
    while (groups > 1 && channels % groups != 0) groups /= 2;
    l.groups = groups;
    l.gamma = Param(Tensor({channels}, 1.0));
    l.beta = Param(Tensor({channels}));
    return l;
}

void NormLayer::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gamma", &gamma);
    out.emplace_back(prefix + ".beta", &beta);
}

ConvBlock ConvBlock::create(int in_ch, int out_ch, int temb_dim, int groups, Rng& rng) {
    ConvBlock b;
    b.c1 = ConvLayer::create(in_ch, out_ch, 3, rng);
    b.n1 = NormLayer::create(out_ch, groups);
    b.temb_proj = LinearLayer::create(temb_dim, out_ch, rng);
    b.c2 = ConvLayer::create(out_ch, out_ch, 3, rng);
    b.n2 = NormLayer::create(out_ch, groups);
    return b;
}

Var ConvBlock::build(Graph& g, Var x, Var temb) {
    Var h = n1.build(g, c1.build(g, x));
    Var tb = temb_proj.build(g, temb);  // (N, C), broadcast over space
    h = g.add_channel_bias(h, tb);
    h = g.silu(h);
    h = n2.build(g, c2.build(g, h));
    return g.silu(h);
}

void ConvBlock::collect(const std::string& prefix, NamedParams& out) {
    c1.collect(prefix + ".c1", out);
    n1.collect(prefix + ".n1", out);
    temb_proj.collect(prefix + ".temb", out);
    c2.collect(prefix + ".c2", out);
    n2.collect(prefix + ".n2", out);
}

// ---------------------------------------------------------------------------
// CBAM
// ---------------------------------------------------------------------------

TimestepCbam TimestepCbam::create(int channels, int temb_dim, Rng& rng, bool zero_gates) {
    TimestepCbam b;
    b.channels = channels;
    const int hidden = channels / 2 > 0 ? channels / 2 : 1;
    b.channel_l1 = LinearLayer::create(channels + temb_dim, hidden, rng, zero_gates);
    b.channel_l2 = LinearLayer::create(hidden, channels, rng, zero_gates);
    b.spatial_conv = ConvLayer::create(2, 1, 3, rng, 1, zero_gates);
    return b;
}

Var TimestepCbam::build(Graph& g, Var features, Var temb) {
    const Tensor& tf = g.value(features);
    if (tf.dim(1) != channels) throw ShapeError("TimestepCbam: channel count mismatch");
    Var pooled = g.global_avg_pool(features);            // (N,C)
    Var cat = g.concat({pooled, temb});                  // (N,C+E)
    Var cg = g.sigmoid(channel_l2.build(g, g.silu(channel_l1.build(g, cat))));
    Var sm = g.channel_mean_max(features);               // (N,2,H,W)
    Var sg = g.sigmoid(spatial_conv.build(g, sm));       // (N,1,H,W)
    Var gated = g.mul_channel_gate(features, cg);
    return g.mul_spatial_gate(gated, sg);
}

void TimestepCbam::collect(const std::string& prefix, NamedParams& out) {
    channel_l1.collect(prefix + ".cl1", out);
    channel_l2.collect(prefix + ".cl2", out);
    spatial_conv.collect(prefix + ".sp", out);
}

Tensor cbam_forward(const Tensor& features, const Tensor& temb_batch, TimestepCbam& block) {
    Graph g;
    Var f = g.input(features);
    Var e = g.input(temb_batch);
    Var y = block.build(g, f, e);
    return g.value(y);
}

// ---------------------------------------------------------------------------
// controller
// ---------------------------------------------------------------------------

ControllerModule ControllerModule::create(int temb_dim, int hidden, Rng& rng) {
    ControllerModule c;
    c.l1 = LinearLayer::create(temb_dim, hidden, rng);
    c.l2 = LinearLayer::create(hidden, 2, rng);
    return c;
}

Var ControllerModule::build_params(Graph& g, Var temb) {
    return g.sigmoid(l2.build(g, g.silu(l1.build(g, temb))));
}

FilterController ControllerModule::to_plain() const {
    FilterController c;
    c.in_dim = l1.w.value.dim(1);
    c.hidden = l1.w.value.dim(0);
    c.w1 = l1.w.value;
    c.b1 = l1.b.value;
    c.w2 = l2.w.value;
    c.b2 = l2.b.value;
    return c;
}

FilterParams ControllerModule::emit(const Tensor& embedding) const {
    return controller_emit(embedding, to_plain());
}

void ControllerModule::collect(const std::string& prefix, NamedParams& out) {
    l1.collect(prefix + ".l1", out);
    l2.collect(prefix + ".l2", out);
}

// ---------------------------------------------------------------------------
// encoders / denoiser
// ---------------------------------------------------------------------------

namespace {

int stage_in_channels(int base, int i) { return i == 0 ? base : base << (i - 1); }
int stage_out_channels(int base, int i) { return base << i; }

}  // namespace

CondEncoder CondEncoder::create(const DenoiserConfig& cfg, Rng& rng) {
    CondEncoder e;
    e.inc = ConvLayer::create(1, cfg.cond_channels, 3, rng);
    for (int i = 0; i < cfg.depth; ++i)
        e.blocks.push_back(ConvBlock::create(stage_in_channels(cfg.cond_channels, i),
                                             stage_out_channels(cfg.cond_channels, i),
                                             cfg.temb_dim, cfg.norm_groups, rng));
    e.out_channels = stage_out_channels(cfg.cond_channels, cfg.depth - 1);
    return e;
}

Var CondEncoder::build(Graph& g, Var x, Var temb) {
    Var h = inc.build(g, x);
    for (auto& b : blocks) h = g.avg_pool2(b.build(g, h, temb));
    return h;
}

void CondEncoder::collect(const std::string& prefix, NamedParams& out) {
    inc.collect(prefix + ".inc", out);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".b" + std::to_string(i), out);
}

DenoiserNet DenoiserNet::create(const DenoiserConfig& cfg, Rng& rng) {
    cfg.validate();
    DenoiserNet net;
    net.cfg = cfg;
    const int n_cond = cfg.modality_count - 1;
    net.temb_mlp = LinearLayer::create(cfg.temb_dim, cfg.temb_dim, rng);
    net.inc = ConvLayer::create(1, cfg.base_channels, 3, rng);
    for (int i = 0; i < cfg.depth; ++i)
        net.down.push_back(ConvBlock::create(stage_in_channels(cfg.base_channels, i),
                                             stage_out_channels(cfg.base_channels, i),
                                             cfg.temb_dim, cfg.norm_groups, rng));
    for (int i = 0; i < n_cond; ++i) {
        net.cond_encoders.push_back(CondEncoder::create(cfg, rng));
        net.controllers.push_back(ControllerModule::create(cfg.temb_dim, cfg.controller_hidden, rng));
    }
    const int bott = stage_out_channels(cfg.base_channels, cfg.depth - 1);
    const int cond_ch = n_cond > 0 ? net.cond_encoders[0].out_channels : 0;
    const int fused = bott + n_cond * cond_ch;
    net.cbam = TimestepCbam::create(fused, cfg.temb_dim, rng);
    net.fuse = ConvLayer::create(fused, bott, 1, rng);
    // Decoder mirrors the encoder: stage i consumes [up(carry), skip_i] and
    // outputs the width the encoder had entering stage i.
    int carry = bott;
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int skip_ch = stage_out_channels(cfg.base_channels, i);
        const int out_ch = stage_in_channels(cfg.base_channels, i);
        net.up.push_back(ConvBlock::create(carry + skip_ch, out_ch, cfg.temb_dim, cfg.norm_groups, rng));
        carry = out_ch;
    }
    net.out_conv = ConvLayer::create(cfg.base_channels, 1, 3, rng, 1, /*zero_init=*/true);
    return net;
}

Var DenoiserNet::build_eps(Graph& g, Tensor x_t, const std::vector<Tensor>& conditions,
                           const std::vector<int>& ts, bool sever) {
    const int n_cond = cfg.modality_count - 1;
    if (static_cast<int>(conditions.size()) != n_cond)
        throw ShapeError("denoiser: expected " + std::to_string(n_cond) + " conditions, got " +
                         std::to_string(conditions.size()));
    if (x_t.rank() != 4 || x_t.dim(1) != 1) throw ShapeError("denoiser: input must be (N,1,H,W)");
    const int N = x_t.dim(0);
    if (static_cast<int>(ts.size()) != N) throw ShapeError("denoiser: one timestep per batch row");
    for (const Tensor& c : conditions)
        if (!c.same_shape(x_t)) throw ShapeError("denoiser: condition shape mismatch");
    const int H = x_t.dim(2), W = x_t.dim(3);

    Var temb_raw = g.input(temb_batch_for(ts, cfg.temb_dim));
    Var temb = g.silu(temb_mlp.build(g, temb_raw));

    Var h = inc.build(g, g.input(std::move(x_t)));
    std::vector<Var> skips;
    for (auto& b : down) {
        Var s = b.build(g, h, temb);
        skips.push_back(s);
        h = g.avg_pool2(s);
    }

    std::vector<Var> latents{h};
    for (int i = 0; i < n_cond; ++i) {
        Var params = controllers[static_cast<size_t>(i)].build_params(g, temb);  // (N,2)
        Var gains = g.lowpass_gains(params, H, W);
        Var filtered = g.freq_filter(conditions[static_cast<size_t>(i)], gains);
        Var lat = cond_encoders[static_cast<size_t>(i)].build(g, filtered, temb);
        if (sever) lat = g.scale(lat, 0.0);
        latents.push_back(lat);
    }
    Var fusedv = g.concat(latents);
    fusedv = cbam.build(g, fusedv, temb);
    h = fuse.build(g, fusedv);

    for (size_t i = 0; i < up.size(); ++i) {
        Var skip = skips[up.size() - 1 - i];
        h = g.upsample_nearest2(h);
        h = up[i].build(g, g.concat({h, skip}), temb);
    }
    return out_conv.build(g, h);
}

void DenoiserNet::collect(const std::string& prefix, NamedParams& out) {
    temb_mlp.collect(prefix + ".tmlp", out);
    inc.collect(prefix + ".inc", out);
    for (size_t i = 0; i < down.size(); ++i) down[i].collect(prefix + ".down" + std::to_string(i), out);
    for (size_t i = 0; i < cond_encoders.size(); ++i) {
        cond_encoders[i].collect(prefix + ".cond" + std::to_string(i), out);
        controllers[i].collect(prefix + ".ctrl" + std::to_string(i), out);
    }
    cbam.collect(prefix + ".cbam", out);
    fuse.collect(prefix + ".fuse", out);
    for (size_t i = 0; i < up.size(); ++i) up[i].collect(prefix + ".up" + std::to_string(i), out);
    out_conv.collect(prefix + ".out", out);
}

CoupledModelSet CoupledModelSet::create(const DenoiserConfig& cfg, Rng& rng) {
    cfg.validate();
    CoupledModelSet set;
    set.cfg = cfg;
    for (int k = 0; k < cfg.modality_count; ++k) set.nets.push_back(DenoiserNet::create(cfg, rng));
    return set;
}

NamedParams CoupledModelSet::named_params() {
    NamedParams out;
    for (size_t k = 0; k < nets.size(); ++k) nets[k].collect("net" + std::to_string(k), out);
    return out;
}

size_t CoupledModelSet::param_count() {
    size_t n = 0;
    for (auto& [name, p] : named_params()) n += p->value.size();
    return n;
}

Tensor temb_batch_for(const std::vector<int>& ts, int dim) {
    Tensor out({static_cast<int>(ts.size()), dim});
    for (size_t i = 0; i < ts.size(); ++i) {
        Tensor e = embed_timestep(ts[i], dim);
        for (int j = 0; j < dim; ++j) out.at(static_cast<int>(i), j) = e[static_cast<size_t>(j)];
    }
    return out;
}

Tensor denoiser_forward(const Tensor& x_t, const std::vector<Tensor>& conditions, int t, int k,
                        CoupledModelSet& models) {
    if (k < 0 || k >= static_cast<int>(models.nets.size()))
        throw IndexError("denoiser_forward: bad network index");
    const int H = x_t.dim(0), W = x_t.dim(1);
    Tensor xb({1, 1, H, W});
    for (size_t i = 0; i < x_t.size(); ++i) xb[i] = x_t[i];
    std::vector<Tensor> cb;
    for (const Tensor& c : conditions) {
        if (!c.same_shape(x_t)) throw ShapeError("denoiser_forward: condition shape mismatch");
        Tensor cc({1, 1, H, W});
        for (size_t i = 0; i < c.size(); ++i) cc[i] = c[i];
        cb.push_back(std::move(cc));
    }
    Graph g;
    Var eps = models.nets[static_cast<size_t>(k)].build_eps(g, std::move(xb), cb, {t},
                                                            models.sever_conditions);
    const Tensor& v = g.value(eps);
    Tensor out({H, W});
    for (size_t i = 0; i < out.size(); ++i) out[i] = v[i];
    return out;
}

// ---------------------------------------------------------------------------
// analytic oracle
// ---------------------------------------------------------------------------

Tensor oracle_posterior_mean(const Tensor& x_t, int t, const AnalyticGaussianDenoiser& oracle,
                             const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T)
        throw IndexError("oracle: t=" + std::to_string(t) + " outside 1.." + std::to_string(schedule.T));
    if (!x_t.same_shape(oracle.mu)) throw ShapeError("oracle: mu shape mismatch");
    const double ab = schedule.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double denom = ab * oracle.sigma2 + 1.0 - ab;
    Tensor m = Tensor::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i)
        m[i] = (oracle.sigma2 * sab * x_t[i] + (1.0 - ab) * oracle.mu[i]) / denom;
    return m;
}

Tensor oracle_eps(const Tensor& x_t, int t, const AnalyticGaussianDenoiser& oracle,
                  const NoiseSchedule& schedule) {
    Tensor m = oracle_posterior_mean(x_t, t, oracle, schedule);
    const double ab = schedule.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double cn = std::sqrt(1.0 - ab);
    Tensor e = Tensor::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i) e[i] = (x_t[i] - sab * m[i]) / cn;
    return e;
}

}  // namespace pairdiff

#include "pairdiff/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairdiff/errors.hpp"

namespace pairdiff {

void SegmenterConfig::validate() const {
    if (input_modalities.empty()) throw ParameterError("SegmenterConfig: no input modalities");
    if (base_channels < 1 || depth < 1) throw ParameterError("SegmenterConfig: bad architecture");
    if (learning_rate <= 0 || batch_size < 1)
        throw ParameterError("SegmenterConfig: bad training params");
    if (pretrain_epochs < 0 || finetune_epochs < 0)
        throw ParameterError("SegmenterConfig: negative epochs");
}

Var SegmenterNet::Block::build(Graph& g, Var x) {
    Var h = g.silu(n1.build(g, c1.build(g, x)));
    return g.silu(n2.build(g, c2.build(g, h)));
}

void SegmenterNet::Block::collect(const std::string& prefix, NamedParams& out) {
    c1.collect(prefix + ".c1", out);
    n1.collect(prefix + ".n1", out);
    c2.collect(prefix + ".c2", out);
    n2.collect(prefix + ".n2", out);
}

SegmenterNet SegmenterNet::create(const SegmenterConfig& cfg, Rng& rng) {
    cfg.validate();
    SegmenterNet net;
    net.cfg = cfg;
    const int cin = static_cast<int>(cfg.input_modalities.size());
    net.inc = ConvLayer::create(cin, cfg.base_channels, 3, rng);
    auto make_block = [&](int in_ch, int out_ch) {
        Block b;
        b.c1 = ConvLayer::create(in_ch, out_ch, 3, rng);
        b.n1 = NormLayer::create(out_ch, 4);
        b.c2 = ConvLayer::create(out_ch, out_ch, 3, rng);
        b.n2 = NormLayer::create(out_ch, 4);
        return b;
    };
    for (int i = 0; i < cfg.depth; ++i) {
        const int in_ch = i == 0 ? cfg.base_channels : cfg.base_channels << (i - 1);
        net.down.push_back(make_block(in_ch, cfg.base_channels << i));
    }
    int carry = cfg.base_channels << (cfg.depth - 1);
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int skip_ch = cfg.base_channels << i;
        const int out_ch = i == 0 ? cfg.base_channels : cfg.base_channels << (i - 1);
        net.up.push_back(make_block(carry + skip_ch, out_ch));
        carry = out_ch;
    }
    net.out_conv = ConvLayer::create(cfg.base_channels, 1, 3, rng);
    return net;
}

Var SegmenterNet::build_logits(Graph& g, Tensor images) {
    Var h = inc.build(g, g.input(std::move(images)));
    std::vector<Var> skips;
    for (auto& b : down) {
        Var s = b.build(g, h);
        skips.push_back(s);
        h = g.avg_pool2(s);
    }
    for (size_t i = 0; i < up.size(); ++i) {
        h = g.upsample_nearest2(h);
        h = up[i].build(g, g.concat({h, skips[up.size() - 1 - i]}));
    }
    return out_conv.build(g, h);
}

NamedParams SegmenterNet::named_params() {
    NamedParams out;
    inc.collect("inc", out);
    for (size_t i = 0; i < down.size(); ++i) down[i].collect("down" + std::to_string(i), out);
    for (size_t i = 0; i < up.size(); ++i) up[i].collect("up" + std::to_string(i), out);
    out_conv.collect("out", out);
    return out;
}

namespace {

Tensor stack_inputs(const std::vector<PairedSample>& batch, const std::vector<int>& modalities) {
    const int N = static_cast<int>(batch.size());
    const int C = static_cast<int>(modalities.size());
    const int H = batch[0].modalities[0].dim(0), W = batch[0].modalities[0].dim(1);
    Tensor x({N, C, H, W});
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c) {
            const Tensor& m = batch[static_cast<size_t>(i)].modalities.at(
                static_cast<size_t>(modalities[static_cast<size_t>(c)]));
            const size_t off = (static_cast<size_t>(i) * C + c) * H * W;
            for (size_t p = 0; p < m.size(); ++p) x[off + p] = m[p];
        }
    return x;
}

Tensor stack_masks(const std::vector<PairedSample>& batch) {
    const int N = static_cast<int>(batch.size());
    const int H = batch[0].mask().dim(0), W = batch[0].mask().dim(1);
    Tensor y({N, 1, H, W});
    for (int i = 0; i < N; ++i) {
        const Tensor& m = batch[static_cast<size_t>(i)].mask();
        const size_t off = static_cast<size_t>(i) * H * W;
        for (size_t p = 0; p < m.size(); ++p) y[off + p] = m[p];
    }
    return y;
}

double run_epochs(SegmenterNet& net, Optimizer& opt, const std::vector<PairedSample>& data,
                  int epochs, Rng& rng, std::vector<double>* curve,
                  const std::vector<PairedSample>& val) {
    double last_val = 0.0;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (int ep = 0; ep < epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(net.cfg.batch_size)) {
            std::vector<PairedSample> batch;
            for (size_t i = start;
                 i < std::min(order.size(), start + static_cast<size_t>(net.cfg.batch_size)); ++i)
                batch.push_back(data[order[i]]);
            Graph g;
            Var logits = net.build_logits(g, stack_inputs(batch, net.cfg.input_modalities));
            Var pred = g.sigmoid(logits);
            Var loss = g.mse(pred, g.input(stack_masks(batch)));
            opt.zero_grad();
            g.backward(loss);
            opt.step();
        }
        if (!val.empty()) {
            Graph g;
            Var logits = net.build_logits(g, stack_inputs(val, net.cfg.input_modalities));
            Var pred = g.sigmoid(logits);
            Var loss = g.mse(pred, g.input(stack_masks(val)));
            last_val = g.value(loss)[0];
            if (curve) curve->push_back(last_val);
        }
    }
    return last_val;
}

}  // namespace

Tensor SegmenterNet::predict_mask(const PairedSample& s) {
    Graph g;
    Var logits = build_logits(g, stack_inputs({s}, cfg.input_modalities));
    Var pred = g.sigmoid(logits);
    const Tensor& p = g.value(pred);
    Tensor mask({p.dim(2), p.dim(3)});
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = p[i] > 0.5 ? 1.0 : 0.0;
    return mask;
}

SegTrainResult train_segmenter(const ExperimentArm& arm, uint64_t seed, const SegmenterConfig& cfg) {
    cfg.validate();
    if (arm.train_data.empty()) throw DataError("train_segmenter: arm '" + arm.name + "' has no training data");
    if (arm.test_data.empty()) throw DataError("train_segmenter: arm '" + arm.name + "' has no test data");

    Rng rng(seed);
    SegmenterNet net = SegmenterNet::create(cfg, rng);
    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.learning_rate;
    NamedParams np = net.named_params();
    std::vector<Param*> ps;
    for (auto& [name, p] : np) ps.push_back(p);
    Optimizer opt(ocfg, ps);

    SegTrainResult result;
    if (!arm.pretrain_data.empty() && cfg.pretrain_epochs > 0)
        run_epochs(net, opt, arm.pretrain_data, cfg.pretrain_epochs, rng, &result.pretrain_curve,
                   arm.val_data);
    run_epochs(net, opt, arm.train_data, cfg.finetune_epochs, rng, &result.val_curve, arm.val_data);

    for (const PairedSample& s : arm.test_data)
        result.test_dice.push_back(dice(net.predict_mask(s), s.mask()));
    return result;
}

ExperimentSuiteResult run_experiment_suite(const std::vector<ExperimentArm>& arms,
                                           const SegmenterConfig& cfg) {
    if (arms.size() < 2) throw ParameterError("run_experiment_suite: need >= 2 arms");
    ExperimentSuiteResult out;
    std::vector<std::string> names;
    std::vector<std::vector<double>> groups;
    for (const ExperimentArm& arm : arms) {
        if (arm.seeds.size() < 2)
            throw ParameterError("run_experiment_suite: arm '" + arm.name +
                                 "' needs >= 2 seeds for statistics");
        std::vector<double> pooled;
        std::vector<double> curve_accum;
        for (uint64_t seed : arm.seeds) {
            SegTrainResult r = train_segmenter(arm, seed, cfg);
            for (size_t c = 0; c < r.test_dice.size(); ++c) {
                pooled.push_back(r.test_dice[c]);
                out.records.push_back({arm.name, seed,
                                       arm.test_data[c].id.empty() ? "case" + std::to_string(c)
                                                                   : arm.test_data[c].id,
                                       r.test_dice[c]});
            }
            if (curve_accum.size() < r.val_curve.size()) curve_accum.resize(r.val_curve.size(), 0.0);
            for (size_t e = 0; e < r.val_curve.size(); ++e) curve_accum[e] += r.val_curve[e];
        }
        for (double& v : curve_accum) v /= static_cast<double>(arm.seeds.size());
        out.val_curves.push_back(std::move(curve_accum));
        names.push_back(arm.name);
        groups.push_back(std::move(pooled));
    }
    out.report = run_statistical_battery(names, groups);
    return out;
}

}  // namespace pairdiff

#include "pairdiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pairdiff/errors.hpp"

namespace pairdiff {

void TrainConfig::validate() const {
    if (epochs < 0) throw ParameterError("TrainConfig: negative epochs");
    if (batch_size < 1) throw ParameterError("TrainConfig: batch_size must be positive");
    if (learning_rate <= 0) throw ParameterError("TrainConfig: learning_rate must be positive");
    if (offset_weight < 0) throw ParameterError("TrainConfig: offset_weight must be >= 0");
    if (perceptual_gate_epoch < 0) throw ParameterError("TrainConfig: perceptual_gate_epoch must be >= 0");
    if (perceptual_weight < 0) throw ParameterError("TrainConfig: perceptual_weight must be >= 0");
}

// ---------------------------------------------------------------------------
// feature extractor
// ---------------------------------------------------------------------------

FeatureExtractor FeatureExtractor::create_seeded(uint64_t seed) {
    Rng rng(seed);
    FeatureExtractor fx;
    fx.mode = Mode::kSeededRandom;
    fx.c1 = ConvLayer::create(1, 8, 3, rng, 1);
    fx.c2 = ConvLayer::create(8, 16, 3, rng, 2);
    fx.c3 = ConvLayer::create(16, 32, 3, rng, 2);
    return fx;
}

FeatureExtractor FeatureExtractor::from_weights(Tensor w1, Tensor b1, Tensor w2, Tensor b2,
                                                Tensor w3, Tensor b3) {
    FeatureExtractor fx;
    fx.mode = Mode::kExternal;
    fx.c1.w = Param(std::move(w1));
    fx.c1.b = Param(std::move(b1));
    fx.c2.w = Param(std::move(w2));
    fx.c2.b = Param(std::move(b2));
    fx.c2.stride = 2;
    fx.c3.w = Param(std::move(w3));
    fx.c3.b = Param(std::move(b3));
    fx.c3.stride = 2;
    return fx;
}

std::vector<Var> FeatureExtractor::build_pyramid(Graph& g, Var x) const {
    Var f1 = g.silu(g.conv2d(x, g.input(c1.w.value), g.input(c1.b.value), c1.stride));
    Var f2 = g.silu(g.conv2d(f1, g.input(c2.w.value), g.input(c2.b.value), c2.stride));
    Var f3 = g.silu(g.conv2d(f2, g.input(c3.w.value), g.input(c3.b.value), c3.stride));
    return {f1, f2, f3};
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& image_batch) const {
    Graph g;
    Var x = g.input(image_batch);
    std::vector<Var> pyr = build_pyramid(g, x);
    std::vector<Tensor> out;
    out.reserve(pyr.size());
    for (Var v : pyr) out.push_back(g.value(v));
    return out;
}

// ---------------------------------------------------------------------------
// perceptual loss
// ---------------------------------------------------------------------------

namespace {

// Builds the pairwise pyramid-distance term inside an existing graph.
Var build_perceptual(Graph& g, const std::vector<Var>& x0_hats, const FeatureExtractor& fx) {
    const size_t n = x0_hats.size();
    if (n < 2) throw ShapeError("perceptual_loss: needs at least 2 modalities");
    std::vector<std::vector<Var>> pyramids;
    pyramids.reserve(n);
    for (Var x : x0_hats) pyramids.push_back(fx.build_pyramid(g, x));

    std::vector<Var> terms;
    for (size_t j = 0; j < n; ++j)
        for (size_t k = j + 1; k < n; ++k) {
            std::vector<Var> level_terms;
            for (size_t l = 0; l < pyramids[j].size(); ++l)
                level_terms.push_back(g.mse(pyramids[j][l], pyramids[k][l]));
            terms.push_back(g.sum_scaled(level_terms,
                                         std::vector<double>(level_terms.size(),
                                                             1.0 / static_cast<double>(level_terms.size()))));
        }
    return g.sum_scaled(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

}  // namespace

double perceptual_loss(const std::vector<Tensor>& x0_hats, const FeatureExtractor& extractor) {
    if (x0_hats.size() < 2) throw ShapeError("perceptual_loss: needs at least 2 modalities");
    for (const Tensor& t : x0_hats)
        if (!t.same_shape(x0_hats[0])) throw ShapeError("perceptual_loss: shape mismatch");
    Graph g;
    std::vector<Var> xs;
    xs.reserve(x0_hats.size());
    for (const Tensor& t : x0_hats) xs.push_back(g.input(t));
    return g.value(build_perceptual(g, xs, extractor))[0];
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

CoupledTrainer::CoupledTrainer(CoupledModelSet& models, const TrainConfig& cfg,
                               const NoiseSchedule& schedule)
    : models_(models), cfg_(cfg), schedule_(schedule),
      extractor_(FeatureExtractor::create_seeded(cfg.seed ^ 0x9e3779b97f4a7c15ULL)) {
    cfg_.validate();
    OptimizerConfig ocfg;
    ocfg.kind = cfg_.optimizer;
    ocfg.lr = cfg_.learning_rate;
    for (auto& net : models_.nets) {
        NamedParams np;
        net.collect("net", np);
        std::vector<Param*> ps;
        ps.reserve(np.size());
        for (auto& [name, p] : np) ps.push_back(p);
        optimizers_.push_back(std::make_unique<Optimizer>(ocfg, std::move(ps)));
    }
}

LossReport CoupledTrainer::training_step(const std::vector<PairedSample>& batch, int epoch,
                                         Rng& rng) {
    if (batch.empty()) throw DataError("training_step: empty batch");
    const int n_mod = models_.cfg.modality_count;
    for (const PairedSample& s : batch)
        if (static_cast<int>(s.modalities.size()) != n_mod)
            throw ShapeError("training_step: sample has " + std::to_string(s.modalities.size()) +
                             " modalities, model expects " + std::to_string(n_mod));

    const int N = static_cast<int>(batch.size());
    const int H = batch[0].modalities[0].dim(0);
    const int W = batch[0].modalities[0].dim(1);

    // one shared timestep per batch element
    std::vector<int> ts(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i)
        ts[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(1, schedule_.T));

    // corrupt every modality with independent offset noise at that t
    std::vector<Tensor> xts(static_cast<size_t>(n_mod), Tensor({N, 1, H, W}));
    std::vector<Tensor> noises(static_cast<size_t>(n_mod), Tensor({N, 1, H, W}));
    for (int i = 0; i < N; ++i) {
        std::vector<Tensor> mods = to_model_space(batch[static_cast<size_t>(i)]);
        for (int k = 0; k < n_mod; ++k) {
            NoiseField nf = sample_offset_noise(H, W, cfg_.offset_weight, rng);
            Tensor xt = forward_diffuse(mods[static_cast<size_t>(k)], ts[static_cast<size_t>(i)],
                                        nf, schedule_);
            const size_t off = static_cast<size_t>(i) * H * W;
            for (size_t p = 0; p < xt.size(); ++p) {
                xts[static_cast<size_t>(k)][off + p] = xt[p];
                noises[static_cast<size_t>(k)][off + p] = nf.values[p];
            }
        }
    }

    Graph g;
    const bool gated = epoch >= cfg_.perceptual_gate_epoch;
    std::vector<Var> mse_terms;
    std::vector<Var> x0_hats;
    LossReport report;
    for (int k = 0; k < n_mod; ++k) {
        std::vector<Tensor> conds;
        for (int j = 0; j < n_mod; ++j)
            if (j != k) conds.push_back(xts[static_cast<size_t>(j)]);
        Var eps = models_.nets[static_cast<size_t>(k)].build_eps(g, xts[static_cast<size_t>(k)],
                                                                 conds, ts, models_.sever_conditions);
        Var mse = g.mse(eps, g.input(noises[static_cast<size_t>(k)]));
        mse_terms.push_back(mse);
        report.mse.push_back(g.value(mse)[0]);

        if (gated) {
            // x0_hat = x_t / sqrt(abar) - sqrt(1-abar)/sqrt(abar) * eps, clamped
            std::vector<double> scales(static_cast<size_t>(N));
            Tensor bias = Tensor::zeros_like(xts[static_cast<size_t>(k)]);
            for (int i = 0; i < N; ++i) {
                const double ab = schedule_.alpha_bar(ts[static_cast<size_t>(i)]);
                scales[static_cast<size_t>(i)] = -std::sqrt(1.0 - ab) / std::sqrt(ab);
                const size_t off = static_cast<size_t>(i) * H * W;
                for (size_t p = 0; p < static_cast<size_t>(H) * W; ++p)
                    bias[off + p] = xts[static_cast<size_t>(k)][off + p] / std::sqrt(ab);
            }
            x0_hats.push_back(g.clamp(g.per_sample_affine(eps, scales, std::move(bias)),
                                      kValueMin, kValueMax));
        }
    }

    std::vector<Var> terms = mse_terms;
    std::vector<double> weights(terms.size(), 1.0);
    report.gated = gated;
    if (gated) {
        Var perc = build_perceptual(g, x0_hats, extractor_);
        report.perceptual = g.value(perc)[0];
        terms.push_back(perc);
        weights.push_back(cfg_.perceptual_weight);
    }
    Var total = g.sum_scaled(terms, weights);
    report.total = g.value(total)[0];

    for (auto& opt : optimizers_) opt->zero_grad();
    g.backward(total);
    for (auto& opt : optimizers_) opt->step();
    return report;
}

double CoupledTrainer::validation_mse(const std::vector<PairedSample>& val_split, uint64_t seed) {
    if (val_split.empty()) return 0.0;
    Rng rng(seed);
    const int n_mod = models_.cfg.modality_count;
    double acc = 0.0;
    int count = 0;
    for (const PairedSample& s : val_split) {
        std::vector<Tensor> mods = to_model_space(s);
        const int t = static_cast<int>(rng.uniform_int(1, schedule_.T));
        const int H = mods[0].dim(0), W = mods[0].dim(1);
        std::vector<Tensor> xts, noises;
        for (int k = 0; k < n_mod; ++k) {
            NoiseField nf = sample_offset_noise(H, W, cfg_.offset_weight, rng);
            xts.push_back(forward_diffuse(mods[static_cast<size_t>(k)], t, nf, schedule_));
            noises.push_back(nf.values);
        }
        for (int k = 0; k < n_mod; ++k) {
            std::vector<Tensor> conds;
            for (int j = 0; j < n_mod; ++j)
                if (j != k) conds.push_back(xts[static_cast<size_t>(j)]);
            Tensor eps = denoiser_forward(xts[static_cast<size_t>(k)], conds, t, k, models_);
            double m = 0.0;
            for (size_t p = 0; p < eps.size(); ++p) {
                const double d = eps[p] - noises[static_cast<size_t>(k)][p];
                m += d * d;
            }
            acc += m / static_cast<double>(eps.size());
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

TrainResult CoupledTrainer::train(const std::vector<PairedSample>& train_split,
                                  const std::vector<PairedSample>& val_split) {
    if (train_split.empty()) throw DataError("train: empty training split");
    TrainResult result;
    Rng rng(cfg_.seed);

    std::vector<size_t> order(train_split.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_total = 0.0;
        int steps = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.batch_size)) {
            std::vector<PairedSample> batch;
            for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size)); ++i) {
                const PairedSample& s = train_split[order[i]];
                batch.push_back(cfg_.augment_data ? augment(s, rng) : s);
            }
            LossReport rep = training_step(batch, epoch, rng);
            epoch_total += rep.total;
            ++steps;

            std::ostringstream os;
            os.precision(17);
            os << "{\"epoch\":" << epoch << ",\"step\":" << steps - 1 << ",\"mse\":[";
            for (size_t k = 0; k < rep.mse.size(); ++k) os << (k ? "," : "") << rep.mse[k];
            os << "],\"perceptual\":" << rep.perceptual
               << ",\"gated\":" << (rep.gated ? "true" : "false") << ",\"total\":" << rep.total << "}";
            result.metrics_lines.push_back(os.str());
        }
        result.train_total_per_epoch.push_back(steps ? epoch_total / steps : 0.0);

        const double val = validation_mse(val_split, cfg_.seed + 1000003ULL * (epoch + 1));
        result.val_mse_per_epoch.push_back(val);
        if (result.best_epoch < 0 || val < result.best_val_mse) {
            result.best_epoch = epoch;
            result.best_val_mse = val;
            result.best_weights.clear();
            for (auto& [name, p] : models_.named_params())
                result.best_weights.emplace_back(name, p->value);
        }
    }
    return result;
}

}  // namespace pairdiff

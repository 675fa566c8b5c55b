#include "pairdiff/sampler.hpp"

#include <cmath>

#include "pairdiff/errors.hpp"

namespace pairdiff {

Tensor CoupledSetModel::predict(int k, const std::vector<Tensor>& chain_states, int t) {
    std::vector<Tensor> conds;
    conds.reserve(chain_states.size() - 1);
    for (size_t j = 0; j < chain_states.size(); ++j)
        if (static_cast<int>(j) != k) conds.push_back(chain_states[j]);
    const int N = chain_states[static_cast<size_t>(k)].dim(0);
    Graph g;
    Var eps = models.nets[static_cast<size_t>(k)].build_eps(
        g, chain_states[static_cast<size_t>(k)], conds, std::vector<int>(static_cast<size_t>(N), t),
        models.sever_conditions);
    return g.value(eps);
}

Tensor OracleModel::predict(int k, const std::vector<Tensor>& chain_states, int t) {
    (void)k;
    const Tensor& x = chain_states[static_cast<size_t>(k)];
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros_like(x);
    Tensor slice({H, W});
    for (int i = 0; i < N; ++i) {
        const size_t off = static_cast<size_t>(i) * H * W;
        for (size_t p = 0; p < slice.size(); ++p) slice[p] = x[off + p];
        Tensor e = oracle_eps(slice, t, oracle, schedule);
        for (size_t p = 0; p < slice.size(); ++p) out[off + p] = e[p];
    }
    return out;
}

void SampleRequest::validate(const NoiseSchedule& schedule) const {
    if (count < 1) throw ParameterError("SampleRequest: count must be >= 1");
    if (height < 1 || width < 1) throw ParameterError("SampleRequest: bad image size");
    if (mode == SampleMode::kStrided) {
        if (stride < 1) throw ParameterError("SampleRequest: stride must be >= 1");
        if (stride > schedule.T) throw ParameterError("SampleRequest: stride exceeds schedule length");
    }
    if (seed_fraction) {
        if (*seed_fraction <= 0.0 || *seed_fraction > 1.0)
            throw ParameterError("SampleRequest: seed_fraction must be in (0,1]");
        if (!source) throw ParameterError("SampleRequest: seeding requires a source sample");
    }
    if (offset_weight < 0) throw ParameterError("SampleRequest: offset_weight must be >= 0");
}

namespace {

Provenance make_provenance(const SampleRequest& req) {
    Provenance p;
    p.mode = req.mode == SampleMode::kAncestral ? "ancestral" : "strided";
    p.stride = req.stride;
    p.posterior_noise = req.posterior_noise;
    p.seed_fraction = req.seed_fraction ? *req.seed_fraction : -1.0;
    p.source_id = req.source_id.empty() && req.source ? req.source->id : req.source_id;
    p.rng_seed = req.rng_seed;
    p.offset_weight = req.offset_weight;
    p.sigma_mode = req.sigma_mode == SigmaMode::kBetaTilde ? "beta_tilde" : "beta";
    p.deterministic = req.deterministic;
    p.snapshot_interval = req.snapshot_interval;
    return p;
}

Tensor batched_offset_noise(int count, int h, int w, double offset_weight, Rng& rng) {
    Tensor out({count, 1, h, w});
    for (int i = 0; i < count; ++i) {
        NoiseField nf = sample_offset_noise(h, w, offset_weight, rng);
        const size_t off = static_cast<size_t>(i) * h * w;
        for (size_t p = 0; p < nf.values.size(); ++p) out[off + p] = nf.values[p];
    }
    return out;
}

std::vector<std::vector<Tensor>> unbatch_clamped(const std::vector<Tensor>& states, bool clamp) {
    const int n_mod = static_cast<int>(states.size());
    const int N = states[0].dim(0), H = states[0].dim(2), W = states[0].dim(3);
    std::vector<std::vector<Tensor>> out(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        out[static_cast<size_t>(i)].resize(static_cast<size_t>(n_mod));
        for (int k = 0; k < n_mod; ++k) {
            Tensor img({H, W});
            const size_t off = static_cast<size_t>(i) * H * W;
            for (size_t p = 0; p < img.size(); ++p) {
                double v = states[static_cast<size_t>(k)][off + p];
                img[p] = clamp ? clamp_value(v) : v;
            }
            out[static_cast<size_t>(i)][static_cast<size_t>(k)] = std::move(img);
        }
    }
    return out;
}

void maybe_snapshot(GenerationRecord& rec, const SampleRequest& req,
                    const std::vector<Tensor>& states, const std::vector<Tensor>& preds, int t,
                    const NoiseSchedule& schedule) {
    if (req.snapshot_interval <= 0) return;
    if (t != schedule.T && t % req.snapshot_interval != 0) return;
    const int n_mod = static_cast<int>(states.size());
    std::vector<Tensor> x0s(static_cast<size_t>(n_mod));
    const int N = states[0].dim(0), H = states[0].dim(2), W = states[0].dim(3);
    for (int k = 0; k < n_mod; ++k) {
        Tensor x0 = Tensor::zeros_like(states[static_cast<size_t>(k)]);
        const double ab = schedule.alpha_bar(t);
        const double inv = 1.0 / std::sqrt(ab), cn = std::sqrt(1.0 - ab);
        for (size_t p = 0; p < x0.size(); ++p)
            x0[p] = clamp_value(inv * (states[static_cast<size_t>(k)][p] - cn * preds[static_cast<size_t>(k)][p]));
        x0s[static_cast<size_t>(k)] = std::move(x0);
    }
    (void)N;
    (void)H;
    (void)W;
    rec.snapshots.emplace_back(t, unbatch_clamped(x0s, false));
}

// Shared ancestral reverse loop from t_start; seeded and unseeded sampling
// differ only in how `states` was initialized.
void ancestral_reverse_loop(EpsModel& model, const SampleRequest& req,
                            const NoiseSchedule& schedule, std::vector<Tensor>& states,
                            int t_start, Rng& rng, GenerationRecord& rec) {
    const int n_mod = static_cast<int>(states.size());
    const int N = states[0].dim(0), H = states[0].dim(2), W = states[0].dim(3);
    for (int t = t_start; t >= 1; --t) {
        // synchronous read phase: all predictions from pre-update states
        std::vector<Tensor> preds(static_cast<size_t>(n_mod));
        for (int k = 0; k < n_mod; ++k) preds[static_cast<size_t>(k)] = model.predict(k, states, t);
        maybe_snapshot(rec, req, states, preds, t, schedule);
        // synchronous write phase
        const double inv_sa = 1.0 / std::sqrt(schedule.alpha(t));
        const double ceps = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
        const double sigma = (t > 1 && !req.deterministic)
                                 ? std::sqrt(posterior_sigma2(schedule, t, req.sigma_mode))
                                 : 0.0;
        for (int k = 0; k < n_mod; ++k) {
            Tensor& x = states[static_cast<size_t>(k)];
            const Tensor& e = preds[static_cast<size_t>(k)];
            for (size_t p = 0; p < x.size(); ++p) x[p] = inv_sa * (x[p] - ceps * e[p]);
            if (sigma > 0.0)
                for (size_t p = 0; p < x.size(); ++p) x[p] += sigma * rng.normal();
        }
    }
    (void)N;
    (void)H;
    (void)W;
}

std::vector<Tensor> init_from_source(const SampleRequest& req, const NoiseSchedule& schedule,
                                     int t_seed, Rng& rng) {
    std::vector<Tensor> mods = to_model_space(*req.source);
    const int H = mods[0].dim(0), W = mods[0].dim(1);
    std::vector<Tensor> states;
    for (size_t k = 0; k < mods.size(); ++k) {
        Tensor chain({req.count, 1, H, W});
        for (int i = 0; i < req.count; ++i) {
            NoiseField nf = sample_offset_noise(H, W, req.offset_weight, rng);
            Tensor xt = forward_diffuse(mods[k], t_seed, nf, schedule);
            const size_t off = static_cast<size_t>(i) * H * W;
            for (size_t p = 0; p < xt.size(); ++p) chain[off + p] = xt[p];
        }
        states.push_back(std::move(chain));
    }
    return states;
}

}  // namespace

GenerationRecord coupled_ancestral_sample(EpsModel& model, const SampleRequest& request,
                                          const NoiseSchedule& schedule) {
    request.validate(schedule);
    if (request.mode != SampleMode::kAncestral)
        throw ParameterError("coupled_ancestral_sample: request mode must be ancestral");
    if (request.seed_fraction)
        throw ParameterError("coupled_ancestral_sample: unseeded only; use seeded_sample");

    GenerationRecord rec;
    rec.provenance = make_provenance(request);
    Rng rng(request.rng_seed);

    std::vector<Tensor> states;
    for (int k = 0; k < model.modality_count(); ++k)
        states.push_back(batched_offset_noise(request.count, request.height, request.width,
                                              request.offset_weight, rng));
    ancestral_reverse_loop(model, request, schedule, states, schedule.T, rng, rec);
    rec.samples = unbatch_clamped(states, true);
    return rec;
}

GenerationRecord seeded_sample(EpsModel& model, const SampleRequest& request,
                               const NoiseSchedule& schedule) {
    request.validate(schedule);
    if (!request.seed_fraction || !request.source)
        throw ParameterError("seeded_sample: seed_fraction and source are required");
    if (static_cast<int>(request.source->modalities.size()) != model.modality_count())
        throw ParameterError("seeded_sample: source must provide every modality");

    GenerationRecord rec;
    rec.provenance = make_provenance(request);
    Rng rng(request.rng_seed);

    const int t_seed = static_cast<int>(std::llround(*request.seed_fraction * schedule.T));
    std::vector<Tensor> states = init_from_source(request, schedule, t_seed, rng);
    ancestral_reverse_loop(model, request, schedule, states, t_seed, rng, rec);
    rec.samples = unbatch_clamped(states, true);
    return rec;
}

GenerationRecord strided_sample(EpsModel& model, const SampleRequest& request,
                                const NoiseSchedule& schedule) {
    request.validate(schedule);
    if (request.mode != SampleMode::kStrided)
        throw ParameterError("strided_sample: request mode must be strided");

    GenerationRecord rec;
    rec.provenance = make_provenance(request);
    Rng rng(request.rng_seed);

    int t_start = schedule.T;
    std::vector<Tensor> states;
    if (request.seed_fraction) {
        if (!request.source) throw ParameterError("strided_sample: seeding requires a source");
        t_start = static_cast<int>(std::llround(*request.seed_fraction * schedule.T));
        states = init_from_source(request, schedule, t_start, rng);
    } else {
        for (int k = 0; k < model.modality_count(); ++k)
            states.push_back(batched_offset_noise(request.count, request.height, request.width,
                                                  request.offset_weight, rng));
    }

    const int n_mod = static_cast<int>(states.size());
    int t = t_start;
    while (t >= 1) {
        const int t_next = t - request.stride > 0 ? t - request.stride : 0;
        std::vector<Tensor> preds(static_cast<size_t>(n_mod));
        for (int k = 0; k < n_mod; ++k) preds[static_cast<size_t>(k)] = model.predict(k, states, t);
        maybe_snapshot(rec, request, states, preds, t, schedule);

        const double ab = schedule.alpha_bar(t);
        const double abn = schedule.alpha_bar(t_next);
        // variance transferred to fresh noise on this jump; at unit stride
        // this is exactly beta_tilde, which makes S=1 match the ancestral
        // posterior mean
        const double sig2 = (1.0 - abn) / (1.0 - ab) * (1.0 - ab / abn);
        const double ceps = std::sqrt(std::max(0.0, 1.0 - abn - sig2));
        const double inv = 1.0 / std::sqrt(ab), cn = std::sqrt(1.0 - ab);
        const double sabn = std::sqrt(abn);
        const double sigma = request.posterior_noise && t_next >= 1 ? std::sqrt(sig2) : 0.0;
        for (int k = 0; k < n_mod; ++k) {
            Tensor& x = states[static_cast<size_t>(k)];
            const Tensor& e = preds[static_cast<size_t>(k)];
            for (size_t p = 0; p < x.size(); ++p) {
                const double x0h = inv * (x[p] - cn * e[p]);
                x[p] = sabn * x0h + ceps * e[p];
            }
            if (sigma > 0.0)
                for (size_t p = 0; p < x.size(); ++p) x[p] += sigma * rng.normal();
        }
        if (t_next == 0) break;
        t = t_next;
    }
    rec.samples = unbatch_clamped(states, true);
    return rec;
}

GenerationRecord replay(EpsModel& model, const Provenance& prov, const NoiseSchedule& schedule,
                        int count, int height, int width, const PairedSample* source) {
    SampleRequest req;
    req.count = count;
    req.height = height;
    req.width = width;
    req.mode = prov.mode == "strided" ? SampleMode::kStrided : SampleMode::kAncestral;
    req.stride = prov.stride;
    req.posterior_noise = prov.posterior_noise;
    if (prov.seed_fraction > 0) req.seed_fraction = prov.seed_fraction;
    req.source = source;
    req.source_id = prov.source_id;
    req.rng_seed = prov.rng_seed;
    req.offset_weight = prov.offset_weight;
    req.sigma_mode = prov.sigma_mode == "beta" ? SigmaMode::kBeta : SigmaMode::kBetaTilde;
    req.deterministic = prov.deterministic;
    req.snapshot_interval = prov.snapshot_interval;

    if (req.mode == SampleMode::kStrided) return strided_sample(model, req, schedule);
    if (req.seed_fraction) return seeded_sample(model, req, schedule);
    return coupled_ancestral_sample(model, req, schedule);
}

}  // namespace pairdiff

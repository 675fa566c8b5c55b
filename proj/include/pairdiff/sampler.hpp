#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pairdiff/nets.hpp"
#include "pairdiff/phantom.hpp"
#include "pairdiff/schedule.hpp"

namespace pairdiff {

// Batched noise-prediction interface the samplers drive. chain_states holds
// one (N,1,H,W) tensor per modality; predict(k, ...) must not observe any
// chain state updated within the current timestep (the samplers read all
// predictions before writing any state).
struct EpsModel {
    virtual ~EpsModel() = default;
    virtual int modality_count() const = 0;
    virtual Tensor predict(int k, const std::vector<Tensor>& chain_states, int t) = 0;
};

// Adapter over a trained CoupledModelSet; conditions for chain k are the
// other chains' current states.
struct CoupledSetModel : EpsModel {
    CoupledModelSet& models;
    explicit CoupledSetModel(CoupledModelSet& m) : models(m) {}
    int modality_count() const override { return models.cfg.modality_count; }
    Tensor predict(int k, const std::vector<Tensor>& chain_states, int t) override;
};

// Adapter over the conjugate-Gaussian oracle; chains are independent.
struct OracleModel : EpsModel {
    AnalyticGaussianDenoiser oracle;
    const NoiseSchedule& schedule;
    int n_modalities;
    OracleModel(AnalyticGaussianDenoiser o, const NoiseSchedule& s, int n = 1)
        : oracle(std::move(o)), schedule(s), n_modalities(n) {}
    int modality_count() const override { return n_modalities; }
    Tensor predict(int k, const std::vector<Tensor>& chain_states, int t) override;
};

enum class SampleMode { kAncestral, kStrided };

struct SampleRequest {
    int count = 1;
    int height = 32, width = 32;
    SampleMode mode = SampleMode::kAncestral;
    int stride = 1;                           // strided mode
    bool posterior_noise = true;              // strided mode: add sigma*z per jump
    std::optional<double> seed_fraction;      // in (0,1]; requires source
    const PairedSample* source = nullptr;     // seeding source
    std::string source_id;
    uint64_t rng_seed = 0;
    double offset_weight = 0.1;               // initialization noise offset
    SigmaMode sigma_mode = SigmaMode::kBetaTilde;
    bool deterministic = false;               // ancestral mode: sigma forced to 0
    int snapshot_interval = 0;                // 0 = no x0 previews

    void validate(const NoiseSchedule& schedule) const;
};

struct Provenance {
    std::string mode;
    int stride = 1;
    bool posterior_noise = true;
    double seed_fraction = -1.0;  // -1 when absent
    std::string source_id;
    uint64_t rng_seed = 0;
    double offset_weight = 0.1;
    std::string sigma_mode;
    bool deterministic = false;
    int snapshot_interval = 0;
};

struct GenerationRecord {
    // samples[i][k]: modality k of sample i, clamped to the value range
    std::vector<std::vector<Tensor>> samples;
    // (t, x0 previews laid out like samples), captured every snapshot_interval steps
    std::vector<std::pair<int, std::vector<std::vector<Tensor>>>> snapshots;
    Provenance provenance;
};

// Reverse diffusion from pure offset noise; all chains advance synchronously.
GenerationRecord coupled_ancestral_sample(EpsModel& model, const SampleRequest& request,
                                          const NoiseSchedule& schedule);

// Reverse diffusion from a real sample noised to seed_fraction of the
// schedule; below initialization this shares the ancestral code path.
GenerationRecord seeded_sample(EpsModel& model, const SampleRequest& request,
                               const NoiseSchedule& schedule);

// Strided x0-prediction sampler visiting t = T, T-S, ..., landing exactly at
// 0. With posterior_noise off this reproduces the sigma=0 ancestral
// trajectory at S=1.
GenerationRecord strided_sample(EpsModel& model, const SampleRequest& request,
                                const NoiseSchedule& schedule);

// Re-runs the generation recorded in `prov` (source must be re-supplied for
// seeded records).
GenerationRecord replay(EpsModel& model, const Provenance& prov, const NoiseSchedule& schedule,
                        int count, int height, int width, const PairedSample* source = nullptr);

}  // namespace pairdiff

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pairdiff/nets.hpp"
#include "pairdiff/optim.hpp"
#include "pairdiff/phantom.hpp"
#include "pairdiff/schedule.hpp"

namespace pairdiff {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    double learning_rate = 1e-4;
    double offset_weight = 0.1;
    int perceptual_gate_epoch = 50;
    double perceptual_weight = 0.1;
    uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
    bool augment_data = false;

    void validate() const;
};

// Frozen conv pyramid used by the perceptual loss: 3 feature maps at strides
// 1, 2, 4. Default weights come from a seeded generator; an externally
// trained extractor can be loaded in its place.
struct FeatureExtractor {
    enum class Mode { kSeededRandom, kExternal };
    Mode mode = Mode::kSeededRandom;
    ConvLayer c1, c2, c3;  // 1->8 s1, 8->16 s2, 16->32 s2

    static FeatureExtractor create_seeded(uint64_t seed);
    static FeatureExtractor from_weights(Tensor w1, Tensor b1, Tensor w2, Tensor b2, Tensor w3,
                                         Tensor b3);

    // Frozen weights enter the graph as constants; gradients flow to x only.
    std::vector<Var> build_pyramid(Graph& g, Var x) const;
    std::vector<Tensor> features(const Tensor& image_batch) const;
};

struct LossReport {
    std::vector<double> mse;   // per modality
    double perceptual = 0.0;
    bool gated = false;
    double total = 0.0;
};

// Mean over unordered modality pairs of the mean squared feature-pyramid
// distance, averaged over pyramid levels. Images are (N,1,H,W) batches.
double perceptual_loss(const std::vector<Tensor>& x0_hats, const FeatureExtractor& extractor);

struct TrainResult {
    std::vector<double> train_total_per_epoch;
    std::vector<double> val_mse_per_epoch;
    std::vector<std::string> metrics_lines;  // line-delimited records
    int best_epoch = -1;
    double best_val_mse = 0.0;
    // weight snapshot from the best validation epoch, keyed by param name
    std::vector<std::pair<std::string, Tensor>> best_weights;
};

// Owns the per-network optimizers and drives the joint training loop:
// shared corruption timestep per sample, per-network noise-prediction MSE,
// epoch-gated cross-modal perceptual term on the x0 estimates, one backward
// pass through the shared total.
class CoupledTrainer {
public:
    CoupledTrainer(CoupledModelSet& models, const TrainConfig& cfg, const NoiseSchedule& schedule);

    LossReport training_step(const std::vector<PairedSample>& batch, int epoch, Rng& rng);

    TrainResult train(const std::vector<PairedSample>& train_split,
                      const std::vector<PairedSample>& val_split);

    double validation_mse(const std::vector<PairedSample>& val_split, uint64_t seed);

    const FeatureExtractor& extractor() const { return extractor_; }

private:
    CoupledModelSet& models_;
    TrainConfig cfg_;
    NoiseSchedule schedule_;
    FeatureExtractor extractor_;
    std::vector<std::unique_ptr<Optimizer>> optimizers_;  // one per network
};

}  // namespace pairdiff

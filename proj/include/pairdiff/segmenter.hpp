#pragma once

#include <string>
#include <vector>

#include "pairdiff/nets.hpp"
#include "pairdiff/optim.hpp"
#include "pairdiff/phantom.hpp"
#include "pairdiff/stats.hpp"

namespace pairdiff {

struct SegmenterConfig {
    std::vector<int> input_modalities{0, 1};  // image channels fed to the net
    int base_channels = 8;
    int depth = 2;
    double learning_rate = 3e-3;
    int batch_size = 8;
    int pretrain_epochs = 8;
    int finetune_epochs = 8;
    OptimizerKind optimizer = OptimizerKind::kAdam;

    void validate() const;
};

// Small encoder-decoder that maps the selected image modalities to mask
// logits. Stands in for the full-scale autocontouring network in the
// downstream protocol.
struct SegmenterNet {
    struct Block {
        ConvLayer c1, c2;
        NormLayer n1, n2;
        Var build(Graph& g, Var x);
        void collect(const std::string& prefix, NamedParams& out);
    };

    SegmenterConfig cfg;
    ConvLayer inc;
    std::vector<Block> down;
    std::vector<Block> up;
    ConvLayer out_conv;

    static SegmenterNet create(const SegmenterConfig& cfg, Rng& rng);
    Var build_logits(Graph& g, Tensor images);  // (N,Cin,H,W) -> (N,1,H,W)
    Tensor predict_mask(const PairedSample& s);  // binary {0,1}
    NamedParams named_params();
};

// One pretraining/data regime of the downstream experiment.
struct ExperimentArm {
    std::string name;
    std::vector<PairedSample> pretrain_data;  // empty = no pretraining
    std::vector<PairedSample> train_data;
    std::vector<PairedSample> val_data;
    std::vector<PairedSample> test_data;
    std::vector<uint64_t> seeds;
};

struct SegTrainResult {
    std::vector<double> test_dice;      // per test case
    std::vector<double> val_curve;      // per fine-tune epoch
    std::vector<double> pretrain_curve;
};

// Optional pretraining phase, then fine-tuning; returns per-case test Dice
// and the epoch-indexed validation loss curve.
SegTrainResult train_segmenter(const ExperimentArm& arm, uint64_t seed, const SegmenterConfig& cfg);

struct ExperimentRecord {
    std::string arm;
    uint64_t seed = 0;
    std::string case_id;
    double dice = 0.0;
};

struct ExperimentSuiteResult {
    StatsReport report;
    std::vector<ExperimentRecord> records;
    std::vector<std::vector<double>> val_curves;  // one averaged curve per arm
};

// Trains every arm across its seeds, pools per-case Dice, then runs the
// ANOVA + Bonferroni battery.
ExperimentSuiteResult run_experiment_suite(const std::vector<ExperimentArm>& arms,
                                           const SegmenterConfig& cfg);

}  // namespace pairdiff

#pragma once

#include "fairkd/data.hpp"
#include "fairkd/losses.hpp"
#include "fairkd/nn.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fairkd {

struct TrainConfig {
    std::size_t epochs = 200;
    // Teacher finetuning budget; defaults to a quarter of `epochs`.
    std::optional<std::size_t> finetune_epochs;
    std::size_t batch_size = 128;
    double lr = 0.01;
    LossWeights weights;
    std::uint64_t seed = 0;
    // Hidden widths only; input and output come from the dataset.
    std::vector<std::size_t> student_hidden{32};
    std::vector<std::size_t> teacher_hidden{64, 64};
    bool shuffle = true;

    std::size_t effective_finetune_epochs() const { return finetune_epochs.value_or(epochs / 4); }
    void validate() const;
};

std::vector<std::size_t> student_dims(const TrainConfig& cfg, const Dataset& data);
std::vector<std::size_t> teacher_dims(const TrainConfig& cfg, const Dataset& data);

struct EvalSnapshot {
    double f1_group0 = 0.0;
    double f1_group1 = 0.0;
    double f1_avg = 0.0;
    double eopp0 = 0.0;
    double eopp1 = 0.0;
    double eodd = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    BatchLossBreakdown loss;  // mean over the epoch's batches; group counts are totals
    std::optional<EvalSnapshot> eval;
};

struct CheckpointRef {
    std::string path;
    std::string sha256;
};

struct RunRecord {
    std::string phase;
    TrainConfig config;
    std::uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    std::vector<CheckpointRef> checkpoints;
};

struct TrainResult {
    DenseNet net;
    RunRecord record;
};

EvalSnapshot evaluate_snapshot(const DenseNet& net, const Dataset& data);

// Cross-entropy training of a freshly initialized network with layer_dims.
// The initial parameters and the batch order are derived from cfg.seed.
TrainResult train_base(const Dataset& train, const TrainConfig& cfg,
                       std::span<const std::size_t> layer_dims,
                       const Dataset* held_out = nullptr);

// Continues cross-entropy training of a copy of `base` on group-k samples
// only, for cfg.effective_finetune_epochs() epochs.
TrainResult finetune_teacher(const DenseNet& base, const Dataset& train, int k,
                             const TrainConfig& cfg, const Dataset* held_out = nullptr);

// Distills the two frozen teachers into a student of student_dims(cfg)
// under cfg.weights. With all distillation weights zero this reproduces
// train_base(train, cfg, student_dims(cfg, train)) bit for bit.
TrainResult train_student(const Dataset& train, const DenseNet& teacher0,
                          const DenseNet& teacher1, const TrainConfig& cfg,
                          const Dataset* held_out = nullptr);

enum class LossTerm { bias0, bias1, debias0, debias1 };

std::string_view loss_term_name(LossTerm term);

struct AblationRow {
    std::string kind;  // "baseline", a loss term name, or "proposed"
    double weight = 0.0;
    LossWeights weights;
    double f0 = 0.0;
    double f1 = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;
};

// CE baseline, then each single distillation term at every grid weight
// (lambda = 1, other terms 0), then base_cfg.weights. All rows share
// base_cfg.seed so they differ only in the loss.
AblationTable run_ablation(const Dataset& train, const Dataset& test, const DenseNet& teacher0,
                           const DenseNet& teacher1, const TrainConfig& base_cfg,
                           std::span<const double> grid);

// Columns: row,weight,l_ce,l_bias0,l_bias1,l_debias0,l_debias1,f0,f1
std::string ablation_to_table(const AblationTable& table);

}  // namespace fairkd

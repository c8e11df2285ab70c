#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resp/augment.hpp"
#include "resp/model.hpp"
#include "resp/signal.hpp"

namespace resp {

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::size_t warmup_epochs = 50;
    std::size_t cooldown_epochs = 10;
    double label_smoothing = 0.10;
    std::uint64_t seed = 3407;
    AugmentConfig augment;
    /// Write a periodic checkpoint every this many epochs; 0 disables periodic checkpoints.
    std::size_t checkpoint_every = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Cross-entropy against (1 − smoothing)·onehot + smoothing / C.
double smoothed_ce_loss(std::span<const double> logits, std::size_t target, double smoothing);

/// Linear warmup from lr/warmup to lr, flat, then linear cooldown to lr/cooldown at the last epoch.
double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg);

using Confusion = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct MetricsReport {
    double macro_accuracy = 0.0;  // mean per-class recall
    double macro_precision = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;  // plain
    Confusion confusion;
};

/// All metrics derive from the confusion matrix; a class with a zero denominator contributes 0.
MetricsReport metrics_from_confusion(const Confusion& confusion);

/// Inference-mode evaluation; consumes no randomness. Throws DataError for an empty set.
MetricsReport evaluate(const Model& model, std::span<const RespirationRecord> records);

/// Adaptive moment estimation, β = (0.9, 0.999), ε = 1e-8, no weight decay.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Parameters without a recorded gradient are updated as if their gradient were zero.
    void step(Model& model, const Gradients& grads, double lr);
    std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<MetricsReport> val;
    std::array<std::size_t, 4> gate_histogram{};  // training-time choices: add, concat, full, avg
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::optional<std::size_t> best_epoch;  // by validation macro accuracy, first maximum
};

using EpochHook = std::function<void(const EpochLog&, const Model&)>;

/// Per epoch: seeded shuffle, then for each sample augment → prepare → forward → smoothed CE,
/// gradients summed in batch order, one Adam step per batch, validation at the end.
/// Random streams: ("shuffle", epoch), ("augment", epoch, index), ("model", epoch, index),
/// where index is the sample's position in `train`. Throws NumericalError on a non-finite loss.
TrainResult train(Model& model, std::span<const RespirationRecord> train, std::span<const RespirationRecord> val,
                  const TrainConfig& cfg, const EpochHook& on_epoch = {});

/// One metrics line: epoch, lr, train_loss, val_macro_acc, val_macro_prec, val_macro_f1, gate histogram.
std::string metrics_line(const EpochLog& log);
inline constexpr const char* kMetricsHeader =
    "epoch\tlr\ttrain_loss\tval_macro_acc\tval_macro_prec\tval_macro_f1\tgate_histogram";

/// Epoch hook that writes metrics.tsv and checkpoints (periodic, best by validation macro
/// accuracy, final) into a run directory.
class RunWriter {
public:
    RunWriter(std::filesystem::path dir, std::size_t checkpoint_every, std::size_t total_epochs);
    void operator()(const EpochLog& log, const Model& model);

private:
    std::filesystem::path dir_;
    std::size_t every_, total_;
    std::ofstream metrics_;
    double best_ = -1.0;
};

}  // namespace resp

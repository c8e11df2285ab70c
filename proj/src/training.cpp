#include "resp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "resp/checkpoint.hpp"
#include "resp/error.hpp"
#include "resp/record_io.hpp"

namespace resp {

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (warmup_epochs + cooldown_epochs > epochs) {
        throw ConfigError("warmup_epochs + cooldown_epochs (" + std::to_string(warmup_epochs + cooldown_epochs) +
                          ") exceeds epochs (" + std::to_string(epochs) + ")");
    }
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
    augment.validate();
}

double smoothed_ce_loss(std::span<const double> logits, std::size_t target, double smoothing) {
    if (target >= logits.size()) {
        throw DataError("invalid class index " + std::to_string(target) + " for " + std::to_string(logits.size()) +
                        " classes");
    }
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
    Tape tape;
    return tape.value(tape.smoothed_cross_entropy(tape.constant(Tensor::row(logits)), target, smoothing)).item();
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.epochs) {
        throw ConfigError("epoch " + std::to_string(epoch) + " outside a " + std::to_string(cfg.epochs) +
                          "-epoch schedule");
    }
    if (epoch < cfg.warmup_epochs) {
        return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    }
    if (cfg.cooldown_epochs > 0 && epoch >= cfg.epochs - cfg.cooldown_epochs) {
        return cfg.lr * static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.cooldown_epochs);
    }
    return cfg.lr;
}

MetricsReport metrics_from_confusion(const Confusion& confusion) {
    const std::size_t c = confusion.size();
    MetricsReport m;
    m.confusion = confusion;
    if (c == 0) return m;
    std::size_t total = 0, correct = 0;
    for (std::size_t k = 0; k < c; ++k) {
        if (confusion[k].size() != c) throw DimensionError("confusion matrix must be square");
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += confusion[k][j];
            col += confusion[j][k];
        }
        total += row;
        correct += confusion[k][k];
        const double tp = static_cast<double>(confusion[k][k]);
        const double recall = row ? tp / static_cast<double>(row) : 0.0;
        const double precision = col ? tp / static_cast<double>(col) : 0.0;
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        m.macro_accuracy += recall;
        m.macro_precision += precision;
        m.macro_f1 += f1;
    }
    m.macro_accuracy /= static_cast<double>(c);
    m.macro_precision /= static_cast<double>(c);
    m.macro_f1 /= static_cast<double>(c);
    m.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return m;
}

MetricsReport evaluate(const Model& model, std::span<const RespirationRecord> records) {
    if (records.empty()) throw DataError("cannot evaluate on an empty split");
    const std::size_t c = model.spec().n_classes;
    Confusion confusion(c, std::vector<std::size_t>(c, 0));
    for (const auto& rec : records) {
        const auto truth = static_cast<std::size_t>(rec.label);
        if (truth >= c) throw DataError("label outside the model's classes in record " + rec.subject_id);
        confusion[truth][model.predict(prepare_input(rec.samples, model.spec()))]++;
    }
    return metrics_from_confusion(confusion);
}

void Adam::step(Model& model, const Gradients& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    model.for_each_parameter([&](Parameter& p) {
        if (m_.size() <= i) {
            m_.emplace_back(p.value.shape());
            v_.emplace_back(p.value.shape());
        }
        auto w = p.value.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        const bool has = grads.contains(p);
        const auto g = has ? grads.of(p).data() : std::span<const double>{};
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = has ? g[k] : 0.0;
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
            w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
        }
        ++i;
    });
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

void require_finite(const Gradients& grads, std::size_t epoch, const std::string& subject) {
    for (const auto& [param, grad] : grads) {
        for (double v : grad.data()) {
            if (!std::isfinite(v)) {
                throw NumericalError("non-finite gradient for '" + param->name + "' at epoch " +
                                     std::to_string(epoch) + ", sample " + subject);
            }
        }
    }
}

}  // namespace

TrainResult train(Model& model, std::span<const RespirationRecord> train_set, std::span<const RespirationRecord> val,
                  const TrainConfig& cfg, const EpochHook& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training split is empty");
    const std::size_t c = model.spec().n_classes;
    std::vector<std::size_t> per_class(c, 0);
    for (const auto& rec : train_set) {
        const auto label = static_cast<std::size_t>(rec.label);
        if (label >= c) throw DataError("label outside the model's classes in record " + rec.subject_id);
        per_class[label]++;
    }
    for (std::size_t k = 0; k < c; ++k) {
        if (per_class[k] == 0) {
            throw DataError("training split has no examples of class " +
                            std::string(label_name(static_cast<PainLabel>(k))));
        }
    }

    Adam adam;
    TrainResult result;
    double best = -1.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr_at_epoch(epoch, cfg);
        Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", epoch);
        const auto order = shuffled(train_set.size(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double weight = 1.0 / static_cast<double>(end - start);
            Gradients batch;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                const auto& rec = train_set[idx];
                Rng aug_rng = Rng::stream(cfg.seed, "augment", epoch, idx);
                Rng model_rng = Rng::stream(cfg.seed, "model", epoch, idx);
                const auto input = prepare_input(apply_augmentations(rec.samples, cfg.augment, aug_rng), model.spec());

                Tape tape;
                const auto out = model.forward(tape, input, true, &model_rng);
                Var loss = tape.smoothed_cross_entropy(out.logits, static_cast<std::size_t>(rec.label),
                                                       cfg.label_smoothing);
                const double value = tape.value(loss).item();
                if (!std::isfinite(value)) {
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                         rec.subject_id);
                }
                loss_sum += value;
                if (out.gate_choice) log.gate_histogram[*out.gate_choice]++;
                const auto grads = tape.backward(loss);
                require_finite(grads, epoch, rec.subject_id);
                batch.accumulate(grads, weight);
            }
            adam.step(model, batch, log.lr);
        }
        log.train_loss = loss_sum / static_cast<double>(order.size());
        if (!val.empty()) {
            log.val = evaluate(model, val);
            if (log.val->macro_accuracy > best) {
                best = log.val->macro_accuracy;
                result.best_epoch = epoch;
            }
        }
        result.epochs.push_back(log);
        if (on_epoch) on_epoch(log, model);
    }
    return result;
}

std::string metrics_line(const EpochLog& log) {
    std::ostringstream out;
    out << log.epoch << '\t' << format_real(log.lr) << '\t' << format_real(log.train_loss);
    if (log.val) {
        out << '\t' << format_real(log.val->macro_accuracy) << '\t' << format_real(log.val->macro_precision) << '\t'
            << format_real(log.val->macro_f1);
    } else {
        out << "\tnan\tnan\tnan";
    }
    out << '\t' << log.gate_histogram[0] << ',' << log.gate_histogram[1] << ',' << log.gate_histogram[2] << ','
        << log.gate_histogram[3];
    return out.str();
}

RunWriter::RunWriter(std::filesystem::path dir, std::size_t checkpoint_every, std::size_t total_epochs)
    : dir_(std::move(dir)), every_(checkpoint_every), total_(total_epochs) {
    std::filesystem::create_directories(dir_);
    metrics_.open(dir_ / "metrics.tsv", std::ios::trunc);
    if (!metrics_) throw Error("cannot write " + (dir_ / "metrics.tsv").string());
    metrics_ << kMetricsHeader << '\n';
}

void RunWriter::operator()(const EpochLog& log, const Model& model) {
    metrics_ << metrics_line(log) << '\n';
    metrics_.flush();
    if (every_ > 0 && (log.epoch + 1) % every_ == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", log.epoch + 1);
        save_checkpoint(dir_ / name, model);
    }
    if (log.val && log.val->macro_accuracy > best_) {
        best_ = log.val->macro_accuracy;
        save_checkpoint(dir_ / "best.ckpt", model);
    }
    if (log.epoch + 1 == total_) save_checkpoint(dir_ / "final.ckpt", model);
}

}  // namespace resp

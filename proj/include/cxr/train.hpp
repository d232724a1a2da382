// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/imaging.hpp"
#include "cxr/labels.hpp"
#include "cxr/metrics.hpp"
#include "cxr/model.hpp"

namespace cxr {

// Preprocessed images with Normal/Pneumonia labels.
struct ImageSet {
    std::vector<GrayImage> images;
    std::vector<Label> labels;

    std::size_t size() const { return images.size(); }
    void add(GrayImage img, Label label);
};

// (n, h, w, 1) batch of normalized pixels for the given indices.
Tensor make_batch(const ImageSet& set, std::span<const std::size_t> indices);
Tensor make_onehot(const ImageSet& set, std::span<const std::size_t> indices);

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    std::size_t epochs = 500;
    OptimizerKind optimizer = OptimizerKind::kAdam;
    // The single "decay" knob drives SGD momentum and Adam beta1.
    double decay = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    // Time-based learning-rate decay: lr / (1 + lr_decay * step). Off by default.
    double lr_decay = 0.0;
    std::size_t patience = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SgdState {
    std::vector<Tensor> velocity;  // empty until the first step
    std::uint64_t steps = 0;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t steps = 0;
};

// w <- w + v, v <- decay * v - lr * g. With no history the first step is
// plain SGD. Throws a divergence error on non-finite gradients.
void step_sgd(std::span<Tensor> weights, std::span<const Tensor> grads, const TrainConfig& cfg, SgdState& state);
// Bias-corrected Adam with beta1 = cfg.decay.
void step_adam(std::span<Tensor> weights, std::span<const Tensor> grads, const TrainConfig& cfg, AdamState& state);

// Best-so-far validation-loss checkpointing with patience.
class CheckpointTracker {
public:
    explicit CheckpointTracker(std::size_t patience) : patience_(patience) {}

    struct Decision {
        bool improved = false;
        bool stop = false;
    };

    // epoch is 1-based.
    Decision observe(std::size_t epoch, double val_loss);

    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    std::size_t epochs_without_improvement() const { return stale_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
    std::size_t stale_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct Evaluation {
    double loss = 0.0;
    std::vector<double> p_pneumonia;
    std::vector<Label> predictions;
    ConfusionMatrix confusion;
    ClassificationReport report;
};

Evaluation evaluate(const ModelArtifact& model, const ImageSet& set, std::size_t batch_size = 64);
ValMetrics to_val_metrics(const Evaluation& e);

struct TrainResult {
    ModelArtifact model;  // best checkpoint, sealed
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    bool diverged = false;
    std::string message;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains a copy of `model`. The returned artifact is the checkpoint with the
// lowest validation loss; when no epoch ran it is the input model with fresh
// validation metrics.
TrainResult train(const ModelArtifact& model, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Continues training from `base` with version base+1 and parent = base's
// digest. An empty training set is a no-op (with a message) apart from the
// version bump and fresh metrics.
TrainResult transfer_retrain(const ModelArtifact& base, const ImageSet& train_set, const ImageSet& val_set,
                             const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace cxr

// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/train.hpp"

#include <cmath>
#include <numeric>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

void ImageSet::add(GrayImage img, Label label) {
    require(label != Label::kUnlabeled, ErrorCode::kInvalidArgument, "training images need a label");
    images.push_back(std::move(img));
    labels.push_back(label);
}

Tensor make_batch(const ImageSet& set, std::span<const std::size_t> indices) {
    require(!indices.empty(), ErrorCode::kInvalidArgument, "empty batch");
    const auto& first = set.images.at(indices[0]);
    const std::size_t h = first.height(), w = first.width();
    Tensor t({indices.size(), h, w, 1});
    double* out = t.data();
    for (auto idx : indices) {
        const auto& img = set.images.at(idx);
        require(img.width() == w && img.height() == h, ErrorCode::kShape, "mixed image sizes in batch");
        for (auto p : img.pixels()) *out++ = p / 255.0;
    }
    return t;
}

Tensor make_onehot(const ImageSet& set, std::span<const std::size_t> indices) {
    Tensor t({indices.size(), kNumClasses});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        Label l = set.labels.at(indices[i]);
        require(l != Label::kUnlabeled, ErrorCode::kInvalidArgument, "unlabeled training sample");
        t[i * kNumClasses + class_index(l)] = 1.0;
    }
    return t;
}

void TrainConfig::validate() const {
    require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
    require(learning_rate > 0.0, ErrorCode::kInvalidArgument, "learning rate must be > 0");
    require(patience <= epochs || epochs == 0, ErrorCode::kInvalidArgument, "patience must not exceed epochs");
    require(decay >= 0.0 && decay < 1.0, ErrorCode::kInvalidArgument, "decay must be in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, ErrorCode::kInvalidArgument, "beta2 must be in [0, 1)");
    require(lr_decay >= 0.0, ErrorCode::kInvalidArgument, "lr_decay must be >= 0");
}

namespace {

void check_step_args(std::span<Tensor> weights, std::span<const Tensor> grads) {
    require(weights.size() == grads.size(), ErrorCode::kShape, "weight and gradient lists differ in length");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        require(weights[i].shape() == grads[i].shape(), ErrorCode::kShape,
                "gradient " + std::to_string(i) + " shape " + shape_string(grads[i].shape()) +
                    " does not match weight " + shape_string(weights[i].shape()));
        require(grads[i].all_finite(), ErrorCode::kDiverged, "non-finite gradient in tensor " + std::to_string(i));
    }
}

double effective_lr(const TrainConfig& cfg, std::uint64_t step) {
    return cfg.learning_rate / (1.0 + cfg.lr_decay * static_cast<double>(step));
}

}  // namespace

void step_sgd(std::span<Tensor> weights, std::span<const Tensor> grads, const TrainConfig& cfg, SgdState& state) {
    check_step_args(weights, grads);
    if (state.velocity.empty())
        for (const auto& w : weights) state.velocity.emplace_back(w.shape());
    const double lr = effective_lr(cfg, state.steps);
    for (std::size_t t = 0; t < weights.size(); ++t) {
        auto w = weights[t].values();
        auto g = grads[t].values();
        auto v = state.velocity[t].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.decay * v[i] - lr * g[i];
            w[i] += v[i];
        }
    }
    ++state.steps;
}

void step_adam(std::span<Tensor> weights, std::span<const Tensor> grads, const TrainConfig& cfg, AdamState& state) {
    check_step_args(weights, grads);
    if (state.m.empty()) {
        for (const auto& w : weights) {
            state.m.emplace_back(w.shape());
            state.v.emplace_back(w.shape());
        }
    }
    ++state.steps;
    const double b1 = cfg.decay, b2 = cfg.beta2;
    const double lr = effective_lr(cfg, state.steps - 1);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    for (std::size_t t = 0; t < weights.size(); ++t) {
        auto w = weights[t].values();
        auto g = grads[t].values();
        auto m = state.m[t].values();
        auto v = state.v[t].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

CheckpointTracker::Decision CheckpointTracker::observe(std::size_t epoch, double val_loss) {
    Decision d;
    if (val_loss < best_loss_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch;
        stale_ = 0;
        d.improved = true;
    } else {
        ++stale_;
    }
    d.stop = stale_ >= patience_ && patience_ > 0;
    return d;
}

Evaluation evaluate(const ModelArtifact& model, const ImageSet& set, std::size_t batch_size) {
    require(set.size() > 0, ErrorCode::kInvalidArgument, "cannot evaluate on an empty set");
    Evaluation e;
    double loss_sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
        Tensor pred = forward(model, make_batch(set, idx));
        loss_sum += loss_categorical_crossentropy(pred, make_onehot(set, idx)) * static_cast<double>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double p = pred[i * kNumClasses + 1];
            e.p_pneumonia.push_back(p);
            e.predictions.push_back(verdict_for(p));
        }
    }
    e.loss = loss_sum / static_cast<double>(set.size());
    e.confusion = confusion(set.labels, e.predictions);
    e.report = report(e.confusion);
    return e;
}

ValMetrics to_val_metrics(const Evaluation& e) {
    ValMetrics m;
    m.loss = e.loss;
    m.accuracy = e.report.accuracy;
    m.precision = e.report.pneumonia().precision;
    m.recall = e.report.pneumonia().recall;
    return m;
}

TrainResult train(const ModelArtifact& model, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    require(val_set.size() > 0, ErrorCode::kInvalidArgument, "validation set is empty");
    require(train_set.size() > 0 || cfg.epochs == 0, ErrorCode::kInvalidArgument, "training set is empty");

    TrainResult result;
    ModelArtifact work = model;
    ModelArtifact best = model;
    Evaluation best_eval;
    bool have_best = false;
    CheckpointTracker tracker(cfg.patience);
    SgdState sgd;
    AdamState adam;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(Rng::mix(cfg.seed, epoch));
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                std::span<const std::size_t> idx(order.data() + start,
                                                 std::min(cfg.batch_size, order.size() - start));
                Gradients g = backward(work, make_batch(train_set, idx), make_onehot(train_set, idx));
                require(std::isfinite(g.loss), ErrorCode::kDiverged, "non-finite training loss");
                loss_sum += g.loss * static_cast<double>(idx.size());
                auto& params = work.mutable_params();
                if (cfg.optimizer == OptimizerKind::kAdam)
                    step_adam(params, g.params, cfg, adam);
                else
                    step_sgd(params, g.params, cfg, sgd);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kDiverged) throw;
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        }

        Evaluation ev = evaluate(work, val_set);
        EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), ev.loss, ev.report.accuracy};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (!std::isfinite(ev.loss)) {
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + ": non-finite validation loss";
            break;
        }
        auto decision = tracker.observe(epoch, ev.loss);
        if (decision.improved) {
            best = work;
            best_eval = std::move(ev);
            have_best = true;
        }
        if (decision.stop) {
            result.stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    if (!have_best) best_eval = evaluate(best, val_set);
    best.set_metrics(to_val_metrics(best_eval));
    best.seal();
    result.model = std::move(best);
    result.best_epoch = tracker.best_epoch();
    return result;
}

TrainResult transfer_retrain(const ModelArtifact& base, const ImageSet& train_set, const ImageSet& val_set,
                             const TrainConfig& cfg, const EpochCallback& on_epoch) {
    ModelArtifact start = base;
    if (!start.sealed()) start.seal();
    const Digest parent = start.digest();
    start.set_version(base.version() + 1);
    start.set_parent_digest(parent);

    TrainConfig effective = cfg;
    std::string note;
    if (train_set.size() == 0) {
        effective.epochs = 0;
        effective.patience = 0;
        note = "empty update batch: no training performed";
    }
    TrainResult r = train(start, train_set, val_set, effective, on_epoch);
    if (!note.empty()) r.message = note;
    return r;
}

}  // namespace cxr

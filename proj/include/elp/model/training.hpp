#pragma once

#include <span>
#include <vector>

#include "elp/model/easeformer.hpp"
#include "elp/nn/adam.hpp"

namespace elp::model {

/// One supervised window: encoder input, decoder input and the L_y targets.
struct Sample {
    FeatureMatrix x_en;
    FeatureMatrix x_de;
    std::vector<double> target;
};

struct TrainHistory {
    std::vector<double> train_loss;  // mean per-sample MSE per epoch
    std::vector<double> val_loss;
    std::vector<double> learning_rate;
    int best_epoch = -1;
    double best_val = 0.0;
    bool early_stopped = false;
};

/// Mean per-sample MSE in evaluation mode.
double evaluate_mse(const Easeformer& model, std::span<const Sample> samples);

/// One optimiser step on `batch`; returns the mean batch loss before the update.
double train_batch(Easeformer& model, nn::Adam& adam, std::span<const Sample> batch, double lr, Rng& rng);

/// Adam with per-epoch halving of the learning rate, shuffled mini-batches
/// and early stopping on validation MSE. The model is left holding the
/// best-validation weights. With no validation samples the training loss is
/// used for model selection.
TrainHistory train(Easeformer& model, std::span<const Sample> train_set, std::span<const Sample> val_set);

}  // namespace elp::model

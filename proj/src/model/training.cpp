#include "elp/model/training.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "elp/error.hpp"
#include "elp/nn/ops.hpp"

namespace elp::model {

double evaluate_mse(const Easeformer& model, std::span<const Sample> samples) {
    if (samples.empty()) throw Error(ErrorKind::InvalidDataset, "evaluate: no samples");
    double total = 0.0;
    for (const auto& s : samples) {
        const auto pred = model.predict(s.x_en, s.x_de);
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - s.target[i]) * (pred[i] - s.target[i]);
        total += acc / static_cast<double>(pred.size());
    }
    return total / static_cast<double>(samples.size());
}

double train_batch(Easeformer& model, nn::Adam& adam, std::span<const Sample> batch, double lr, Rng& rng) {
    if (batch.empty()) throw Error(ErrorKind::InvalidDataset, "train_batch: empty batch");
    model.parameters().zero_grad();
    const double weight = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    for (const auto& s : batch) {
        ForwardContext ctx{true, rng.derive(rng.below(~0ULL))};
        const nn::Tensor pred = model.forward(s.x_en, s.x_de, ctx);
        const nn::Tensor target = nn::Tensor::from({s.target.size(), 1}, s.target);
        const nn::Tensor loss = nn::mse_loss(pred, target);
        loss_sum += loss.item();
        loss.backward(weight);
    }
    adam.step(model.parameters(), lr);
    return loss_sum * weight;
}

TrainHistory train(Easeformer& model, std::span<const Sample> train_set, std::span<const Sample> val_set) {
    if (train_set.empty()) throw Error(ErrorKind::InvalidDataset, "train: empty training set");
    const auto& cfg = model.config();
    nn::Adam adam(model.parameters(), {}, cfg.base_lr);
    Rng rng = Rng(cfg.seed).derive(2);

    TrainHistory history;
    history.best_val = std::numeric_limits<double>::infinity();
    auto best = model.snapshot();
    int stale = 0;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = nn::lr_schedule(epoch, cfg.base_lr);
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
            epoch_loss += train_batch(model, adam, batch, lr, rng) * static_cast<double>(end - start);
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        history.learning_rate.push_back(lr);

        const double val = val_set.empty() ? evaluate_mse(model, train_set) : evaluate_mse(model, val_set);
        history.val_loss.push_back(val);
        if (val < history.best_val) {
            history.best_val = val;
            history.best_epoch = epoch;
            best = model.snapshot();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            history.early_stopped = true;
            break;
        }
    }
    model.restore(best);
    return history;
}

}  // namespace elp::model

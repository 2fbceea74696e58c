#pragma once

// End-to-end energy-loss prediction: filter, forecast, integrate, estimate.
// Also hosts the model-comparison experiment grid.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elp/dataio.hpp"
#include "elp/domain.hpp"
#include "elp/error.hpp"
#include "elp/filter.hpp"
#include "elp/model/easeformer.hpp"
#include "elp/model/training.hpp"
#include "elp/regression.hpp"

namespace elp::pipeline {

enum class Phase { Load, Filter, Split, Train, Predict, Integrate, Estimate, Report };
std::string to_string(Phase p);

/// An error that remembers which pipeline phase raised it.
class PhaseError : public Error {
public:
    PhaseError(Phase phase, const Error& cause);
    Phase phase() const { return phase_; }

private:
    Phase phase_;
};

/// Runs `fn`, re-throwing any elp::Error as a PhaseError tagged with `phase`.
template <typename Fn>
auto in_phase(Phase phase, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const PhaseError&) {
        throw;
    } catch (const Error& e) {
        throw PhaseError(phase, e);
    }
}

struct PredictionBundle {
    domain::Series pl_hat, pu_hat, cg_hat, cu_hat;
    domain::Series rt_hat, rr_hat, el_hat;

    static PredictionBundle assemble(domain::Series pl, domain::Series pu, domain::Series cg, domain::Series cu);
    /// Exact (bitwise) check of rt = pl - pu, rr = cg + cu, el = rt - rr.
    bool invariants_hold() const;
};

enum class Target { ProviderLoss, ConsumerGain };
std::string to_string(Target t);

enum class ModelMode {
    Informer,       // no EIT, zero-initialised prediction block
    EaseformerPrior,  // prior column filled with raw distance, no EIT
    EaseformerEit,  // prior column filled with EIT probabilities
};
std::string to_string(ModelMode m);         // csv key
std::string display_name(ModelMode m);      // table label
model::EaseformerConfig apply_mode(model::EaseformerConfig base, ModelMode mode);
inline constexpr ModelMode kAllModes[] = {ModelMode::Informer, ModelMode::EaseformerPrior, ModelMode::EaseformerEit};

/// Filtered, split and normalised series for one target.
struct PreparedTarget {
    Target target = Target::ProviderLoss;
    data::NormStats stats;
    std::vector<data::SessionSeries> stream;  // every kept session, collection order, normalised
    std::vector<data::SessionSeries> raw;     // same sessions in mAh
    std::vector<std::size_t> train, val, test; // indices into stream
    std::vector<double> train_distances;       // distances seen in the training split
};

/// PU or CU per idle record with the matching minute indices.
struct IdleUsage {
    std::vector<domain::Series> usage;
    std::vector<domain::Series> minutes;
};

struct PreparedData {
    filter::FilterResult filtered;
    data::SplitIndices split;
    PreparedTarget provider;
    PreparedTarget consumer;
    IdleUsage provider_idle, consumer_idle;
};

/// Phase 1 plus splitting and normalisation. With `apply_filter` off every
/// session is kept (for inputs that were filtered earlier).
PreparedData prepare(const data::SessionSet& sessions, const filter::FilterConfig& filter_config,
                     const data::SplitFractions& fractions, bool apply_filter = true);

/// Value of the distance channel for `distance_cm` under the given config.
/// Without EIT the raw distance is used.
double distance_feature(const model::EaseformerConfig& config, const model::DistancePreferenceTable& table,
                        double distance_cm);

model::DistancePreferenceTable fit_table(const PreparedTarget& data, const model::EaseformerConfig& config);

/// Training windows over the concatenated sessions of one split, every `stride` rows.
std::vector<model::Sample> training_windows(const PreparedTarget& data, const std::vector<std::size_t>& part,
                                            const model::EaseformerConfig& config,
                                            const model::DistancePreferenceTable& table, std::size_t stride);

/// A forecast whose prediction block is exactly one session of `part`,
/// with the preceding L_x rows of the full stream as history.
struct EvalWindow {
    std::size_t stream_index = 0;
    std::string session_id;
    double distance_cm = 0.0;
    model::Sample sample;           // normalised
    std::vector<double> truth_raw;  // target in mAh
    std::vector<double> minutes;    // raw minute indices of the prediction block
};

std::vector<EvalWindow> eval_windows(const PreparedTarget& data, const std::vector<std::size_t>& part,
                                     const model::EaseformerConfig& config,
                                     const model::DistancePreferenceTable& table);

struct RunOptions {
    std::size_t train_stride = 1;
    bool keep_checkpoint = false;
};

struct ForecastMetrics {
    double mse = 0.0;      // normalised units
    double mae = 0.0;
    double mse_raw = 0.0;  // mAh
    double mae_raw = 0.0;
};

/// One trained forecaster and its held-out predictions.
struct ForecastRun {
    model::EaseformerConfig config;
    model::TrainHistory history;
    double val_mse = 0.0;   // normalised, best epoch, on the validation windows
    ForecastMetrics test;
    std::vector<EvalWindow> windows;              // test windows
    std::vector<std::vector<double>> predictions; // raw mAh, one per window
    std::string checkpoint;                       // serialised weights, if requested
};

ForecastRun train_forecaster(const PreparedTarget& data, const model::EaseformerConfig& config,
                             const RunOptions& options = RunOptions());

/// Raw-unit forecaster used by run_elp; the default trains an Easeformer.
using Forecaster = std::function<std::vector<double>(const EvalWindow&)>;
/// Raw-unit usage predictor; receives the minutes of the prediction block.
using UsagePredictor = std::function<std::vector<double>(const std::vector<double>& minutes)>;

struct ElpOverrides {
    Forecaster pl, cg;
    UsagePredictor pu, cu;
};

struct ElpConfig {
    model::EaseformerConfig model;
    filter::FilterConfig filter;
    data::SplitFractions fractions;
    RunOptions options;
    bool apply_filter = true;
};

struct SessionPrediction {
    std::string session_id;
    double distance_cm = 0.0;
    std::vector<double> minutes;
    PredictionBundle bundle;
    domain::Series el_truth;
};

struct ElpResult {
    filter::FilterReport filter;
    regression::LinearModel pu_model, cu_model;
    double pu_mse = 0.0, cu_mse = 0.0;  // held-out idle records, mAh^2
    std::optional<ForecastRun> pl_run, cg_run;  // absent when overridden
    std::vector<SessionPrediction> sessions;
    double el_mse_raw = 0.0, el_mae_raw = 0.0;
    double el_mse = 0.0, el_mae = 0.0;  // standardised by the training-split EL statistics
};

/// Fits the idle usage model of one role on pooled records.
regression::LinearModel fit_usage(const IdleUsage& idle, const std::vector<std::size_t>& records);

/// Mean usage across `records` at each requested minute; the held-out ground truth.
std::vector<double> mean_usage(const IdleUsage& idle, const std::vector<std::size_t>& records,
                               const std::vector<double>& minutes);

struct IdleSplit {
    std::vector<std::size_t> train, test;
};
/// Idle records split chronologically with the same fractions (val folded into train).
IdleSplit split_idle(std::size_t n, const data::SplitFractions& fractions);

ElpResult run_elp(const PreparedData& data, const ElpConfig& config, const ElpOverrides& overrides = {});
ElpResult run_elp(const data::SessionSet& sessions, const ElpConfig& config, const ElpOverrides& overrides = {});

struct ExperimentConfig {
    model::EaseformerConfig base;
    std::vector<std::size_t> token_lens = {30, 60, 90};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t elp_token_len = 30;
    filter::FilterConfig filter;
    data::SplitFractions fractions;
    RunOptions options;
    std::string predictions_dir;  // per-run prediction CSVs when non-empty
    std::size_t threads = 1;
    bool apply_filter = true;
};

struct RunRecord {
    ModelMode mode = ModelMode::Informer;
    std::size_t token_len = 0;
    Target target = Target::ProviderLoss;
    std::uint64_t seed = 0;
    double val_mse = 0.0;
    ForecastMetrics test;
    int best_epoch = -1;
    std::size_t epochs_run = 0;
};

struct GridCell {
    ModelMode mode = ModelMode::Informer;
    std::size_t token_len = 0;
    Target target = Target::ProviderLoss;
    std::string metric;  // MSE or MAE
    double mean = 0.0, std = 0.0;          // normalised
    double raw_mean = 0.0, raw_std = 0.0;  // mAh or mAh^2
    std::vector<double> per_seed;
};

struct SummaryRow {
    std::string name;
    std::string metric;
    double mean = 0.0, std = 0.0;
    double raw_mean = 0.0, raw_std = 0.0;
    std::vector<double> per_seed;
};

struct ExperimentReport {
    std::vector<std::uint64_t> seeds;
    std::vector<GridCell> cells;
    std::vector<SummaryRow> summary;
    std::vector<std::string> footnotes;
    std::vector<RunRecord> runs;

    std::string to_csv() const;
    std::string to_table() const;
    bool all_finite() const;
};

ExperimentReport run_experiment_grid(const data::SessionSet& sessions, const ExperimentConfig& config);

/// minute_index,truth,prediction rows for external plotting.
std::string predictions_csv(const std::vector<EvalWindow>& windows, const std::vector<std::vector<double>>& preds);

/// Mean and sample standard deviation (n-1; zero for a single value).
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Parallel loop over [0, n) with at most `threads` workers. Results must not
/// depend on the worker count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Worker cap from ELP_THREADS, else the hardware concurrency.
std::size_t default_threads();

}  // namespace elp::pipeline

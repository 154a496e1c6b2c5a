#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "migt/data.hpp"
#include "migt/model.hpp"

namespace migt {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t epochs = 100;
    DropoutRates dropout;

    // Elastic-net style penalties added to the BCE loss.
    double weight_l2 = 0.005;
    double bias_l1 = 0.005;
    double bias_l2 = 0.005;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    std::size_t folds = 5;
    std::uint64_t seed = 0;
    /// Folds trained concurrently. Results do not depend on this.
    std::size_t workers = 1;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// ---------------------------------------------------------------------------

class Adam {
   public:
    Adam(const ParamStore& params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// One update from the gradients currently stored on the parameters.
    void step();
    std::size_t steps() const { return t_; }
    std::span<const double> first_moment(std::size_t param) const { return m_.at(param); }
    std::span<const double> second_moment(std::size_t param) const { return v_.at(param); }

   private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// weight_l2·Σ‖W‖² + Σ(bias_l1·‖b‖₁ + bias_l2·‖b‖²). Normalization parameters
/// are not penalized. Differentiable.
Tensor regularization_penalty(const ParamStore& params, const TrainConfig& config);

// ---------------------------------------------------------------------------

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// k folds whose test sets partition the subjects, with class proportions
/// kept per fold. Throws ConfigError if k exceeds the minority class size.
std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Stacks the selected subjects for the modalities `config` uses. Volumes
/// smaller than config.volume_extent are zero-padded at the far corner.
Batch make_batch(const Cohort& cohort, std::span<const std::size_t> indices, const ModelConfig& config);

/// Throws DimensionError if the cohort's modality shapes disagree with `config`.
void check_cohort_compatible(const Cohort& cohort, const ModelConfig& config);

/// Hooks for auditing what the training loop touches. Calls may come from
/// several threads when folds run concurrently.
struct TrainObserver {
    std::function<void(std::size_t fold, std::size_t epoch, std::span<const std::size_t> batch)> on_batch;
    std::function<void(std::size_t fold, std::span<const std::size_t> test)> on_evaluate;
};

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean regularized loss per epoch
};

TrainHistory train_model(Model& model, const Cohort& cohort, std::span<const std::size_t> train_indices,
                         const TrainConfig& config, std::uint64_t seed, std::size_t fold = 0,
                         const TrainObserver* observer = nullptr);

/// SZ probabilities in eval mode.
std::vector<double> predict(const Model& model, const Cohort& cohort, std::span<const std::size_t> indices,
                            std::size_t batch_size = 32);

// ---------------------------------------------------------------------------

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Metrics {
    double accuracy = 0.0;
    // Macro averages over the two classes.
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::array<ClassMetrics, 2> per_class{};  // [HC, SZ]
    /// confusion[truth][prediction]
    std::array<std::array<std::size_t, 2>, 2> confusion{};
};

/// Undefined ratios (no predicted or no true members of a class) count as 0.
Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population
};
MeanStd mean_std(std::span<const double> values);

struct FoldResult {
    std::size_t fold = 0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::vector<double> probabilities;
    Metrics metrics;
    TrainHistory history;
    std::shared_ptr<Model> model;  // set when CvOptions::keep_models
};

struct CvSummary {
    MeanStd accuracy, precision, recall, f1;
};

struct CvReport {
    ModelConfig model;
    TrainConfig train;
    std::vector<FoldResult> folds;
    CvSummary summary;
};

struct CvOptions {
    /// Precomputed splits; empty means stratified_kfold(labels, folds, seed).
    std::vector<Fold> folds;
    const TrainObserver* observer = nullptr;
    bool keep_models = false;
    /// Initial parameter values loaded into every fold's model before training.
    const ParamStore* init = nullptr;
};

CvReport run_cv(const Cohort& cohort, const ModelConfig& model, const TrainConfig& train, const CvOptions& options = {});

CvSummary summarize(const std::vector<FoldResult>& folds);

/// Machine-readable report without timestamps or host details.
nlohmann::json report_to_json(const CvReport& report, const std::string& cohort_path = {});

/// One "mean ± std" row per report: modalities, fusion, accuracy, precision,
/// recall, F1.
std::string format_results_table(std::span<const CvReport> reports);

}  // namespace migt

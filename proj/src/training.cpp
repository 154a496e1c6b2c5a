#include "migt/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "migt/errors.hpp"
#include "json_fields.hpp"

namespace migt {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (workers == 0) throw ConfigError("workers must be positive");
    for (double p : {dropout.p1, dropout.p2, dropout.p3, dropout.head}) {
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
    }
    for (double r : {weight_l2, bias_l1, bias_l2}) {
        if (!(r >= 0.0)) throw ConfigError("regularization rates must be non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"dropout", {{"p1", c.dropout.p1}, {"p2", c.dropout.p2}, {"p3", c.dropout.p3}, {"head", c.dropout.head}}},
        {"weight_l2", c.weight_l2},
        {"bias_l1", c.bias_l1},
        {"bias_l2", c.bias_l2},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"adam_eps", c.adam_eps},
        {"folds", c.folds},
        {"seed", c.seed},
        {"workers", c.workers},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    try {
        auto read = [](const nlohmann::json& src, const char* key, auto& field) {
            detail::read_field(src, "train config: ", key, field);
        };
        read(j, "learning_rate", c.learning_rate);
        read(j, "batch_size", c.batch_size);
        read(j, "epochs", c.epochs);
        if (j.contains("dropout")) {
            const auto& d = j.at("dropout");
            read(d, "p1", c.dropout.p1);
            read(d, "p2", c.dropout.p2);
            read(d, "p3", c.dropout.p3);
            read(d, "head", c.dropout.head);
        }
        read(j, "weight_l2", c.weight_l2);
        read(j, "bias_l1", c.bias_l1);
        read(j, "bias_l2", c.bias_l2);
        read(j, "beta1", c.beta1);
        read(j, "beta2", c.beta2);
        read(j, "adam_eps", c.adam_eps);
        read(j, "folds", c.folds);
        read(j, "seed", c.seed);
        read(j, "workers", c.workers);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------

Adam::Adam(const ParamStore& params, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params.items()) {
        if (!p.value.requires_grad()) throw StateError("Adam: parameter " + p.key + " does not track gradients");
        params_.push_back(p.value);
        m_.emplace_back(p.value.numel(), 0.0);
        v_.emplace_back(p.value.numel(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto value = params_[i].mutable_data();
        auto grad = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            value[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

Tensor regularization_penalty(const ParamStore& params, const TrainConfig& config) {
    Tensor total;
    auto accumulate = [&](const Tensor& term) { total = total.defined() ? add(total, term) : term; };
    for (const auto& p : params.items()) {
        switch (p.kind) {
            case ParamKind::Weight:
                if (config.weight_l2 > 0.0) accumulate(scale(sum_squares(p.value), config.weight_l2));
                break;
            case ParamKind::Bias:
                if (config.bias_l1 > 0.0) accumulate(scale(sum_abs(p.value), config.bias_l1));
                if (config.bias_l2 > 0.0) accumulate(scale(sum_squares(p.value), config.bias_l2));
                break;
            case ParamKind::Norm:
                break;
        }
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

// ---------------------------------------------------------------------------

std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_kfold: k must be at least 2");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ParameterError("stratified_kfold: labels must be 0 or 1");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < 2; ++c) {
        if (by_class[c].size() < k) {
            throw ConfigError("stratified_kfold: " + std::to_string(k) + " folds but class " + std::to_string(c) +
                              " has only " + std::to_string(by_class[c].size()) + " subjects");
        }
    }
    Rng rng(derive_seed(seed, 0xF01D));
    std::vector<std::size_t> fold_of(labels.size());
    // Deal each shuffled class round-robin, continuing where the previous class
    // stopped so fold sizes differ by at most one overall.
    std::size_t next = 0;
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (auto idx : members) fold_of[idx] = next++ % k;
    }
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
    }
    return folds;
}

void check_cohort_compatible(const Cohort& cohort, const ModelConfig& config) {
    if (cohort.subjects.empty()) throw ConfigError("cohort has no subjects");
    const auto& m = config.modalities;
    if (m.genomic && cohort.snp_dim() != config.snp_dim) {
        throw DimensionError("model expects genomic input of width " + std::to_string(config.snp_dim) +
                             ", cohort provides " + std::to_string(cohort.snp_dim()));
    }
    if (m.connectome && cohort.fnc_dim() != config.fnc_dim) {
        throw DimensionError("model expects connectome input of width " + std::to_string(config.fnc_dim) +
                             ", cohort provides " + std::to_string(cohort.fnc_dim()));
    }
    if (m.volume) {
        const auto have = cohort.volume_extent();
        for (std::size_t a = 0; a < 3; ++a) {
            if (have[a] > config.volume_extent[a]) {
                throw DimensionError("cohort volume " + shape_string({have[0], have[1], have[2]}) +
                                     " exceeds model volume " +
                                     shape_string({config.volume_extent[0], config.volume_extent[1],
                                                   config.volume_extent[2]}));
            }
        }
    }
}

Batch make_batch(const Cohort& cohort, std::span<const std::size_t> indices, const ModelConfig& config) {
    check_cohort_compatible(cohort, config);
    const std::size_t b = indices.size();
    Batch batch;
    batch.labels.reserve(b);
    for (auto i : indices) batch.labels.push_back(static_cast<double>(cohort.subjects.at(i).label));

    auto stack = [&](auto member, std::size_t width) {
        std::vector<double> data;
        data.reserve(b * width);
        for (auto i : indices) {
            auto v = (cohort.subjects[i].*member).data();
            data.insert(data.end(), v.begin(), v.end());
        }
        return Tensor({b, width}, std::move(data));
    };
    if (config.modalities.genomic) batch.genomic = stack(&SubjectRecord::genomic, config.snp_dim);
    if (config.modalities.connectome) batch.connectome = stack(&SubjectRecord::connectome, config.fnc_dim);
    if (config.modalities.volume) {
        const auto& out = config.volume_extent;
        const auto in = cohort.volume_extent();
        const std::size_t voxels = out[0] * out[1] * out[2];
        std::vector<double> data(b * voxels, 0.0);
        for (std::size_t s = 0; s < b; ++s) {
            auto v = cohort.subjects[indices[s]].volume.data();
            double* dst = data.data() + s * voxels;
            for (std::size_t z = 0; z < in[0]; ++z)
                for (std::size_t y = 0; y < in[1]; ++y)
                    std::copy_n(v.data() + (z * in[1] + y) * in[2], in[2], dst + (z * out[1] + y) * out[2]);
        }
        batch.volume = Tensor({b, 1, out[0], out[1], out[2]}, std::move(data));
    }
    return batch;
}

TrainHistory train_model(Model& model, const Cohort& cohort, std::span<const std::size_t> train_indices,
                         const TrainConfig& config, std::uint64_t seed, std::size_t fold,
                         const TrainObserver* observer) {
    config.validate();
    check_cohort_compatible(cohort, model.config());
    if (train_indices.empty()) throw ConfigError("training set is empty");
    Adam adam(model.params(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    Rng order_rng(derive_seed(seed, 0x5EED));
    Rng dropout_rng(derive_seed(seed, 0xD409));
    ForwardContext ctx{Mode::Train, &dropout_rng, false};

    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    TrainHistory history;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, len);
            if (observer && observer->on_batch) observer->on_batch(fold, epoch, idx);
            const Batch batch = make_batch(cohort, idx, model.config());

            model.params().zero_grad();
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                auto out = model.forward(batch, ctx);
                loss = add(bce_loss(out.prob, batch.labels), regularization_penalty(model.params(), config));
            }
            backward(loss, tape);
            adam.step();
            loss_sum += loss.item();
            ++batches;
        }
        history.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return history;
}

std::vector<double> predict(const Model& model, const Cohort& cohort, std::span<const std::size_t> indices,
                            std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("predict: batch_size must be positive");
    std::vector<double> probs;
    probs.reserve(indices.size());
    const ForwardContext ctx{Mode::Eval, nullptr, false};
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, indices.size() - start);
        const Batch batch = make_batch(cohort, indices.subspan(start, len), model.config());
        const Tensor p = model.forward(batch, ctx).prob;
        probs.insert(probs.end(), p.data().begin(), p.data().end());
    }
    return probs;
}

// ---------------------------------------------------------------------------

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw DimensionError("compute_metrics: truth and predictions differ in length");
    if (truth.empty()) throw ConfigError("compute_metrics: no predictions");
    Metrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if ((truth[i] != 0 && truth[i] != 1) || (predicted[i] != 0 && predicted[i] != 1)) {
            throw ParameterError("compute_metrics: labels must be 0 or 1");
        }
        ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    const auto& c = m.confusion;
    m.accuracy = static_cast<double>(c[0][0] + c[1][1]) / static_cast<double>(truth.size());
    for (std::size_t k = 0; k < 2; ++k) {
        const auto tp = static_cast<double>(c[k][k]);
        const auto predicted_k = static_cast<double>(c[0][k] + c[1][k]);
        const auto actual_k = static_cast<double>(c[k][0] + c[k][1]);
        auto& pc = m.per_class[k];
        pc.precision = ratio(tp, predicted_k);
        pc.recall = ratio(tp, actual_k);
        pc.f1 = ratio(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
    }
    m.precision = (m.per_class[0].precision + m.per_class[1].precision) / 2.0;
    m.recall = (m.per_class[0].recall + m.per_class[1].recall) / 2.0;
    m.f1 = (m.per_class[0].f1 + m.per_class[1].f1) / 2.0;
    return m;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

CvSummary summarize(const std::vector<FoldResult>& folds) {
    std::vector<double> acc, prec, rec, f1;
    for (const auto& f : folds) {
        acc.push_back(f.metrics.accuracy);
        prec.push_back(f.metrics.precision);
        rec.push_back(f.metrics.recall);
        f1.push_back(f.metrics.f1);
    }
    return {mean_std(acc), mean_std(prec), mean_std(rec), mean_std(f1)};
}

CvReport run_cv(const Cohort& cohort, const ModelConfig& model_config, const TrainConfig& train,
                const CvOptions& options) {
    model_config.validate();
    train.validate();
    check_cohort_compatible(cohort, model_config);
    const auto labels = cohort.labels();

    CvReport report;
    report.model = model_config;
    report.train = train;
    const auto folds = options.folds.empty() ? stratified_kfold(labels, train.folds, train.seed) : options.folds;
    report.folds.resize(folds.size());

    auto run_fold = [&](std::size_t f) {
        // Each fold owns an independent stream rooted at seed + fold.
        const std::uint64_t fold_seed = train.seed + f;
        auto model = std::make_shared<Model>(model_config, train.dropout, derive_seed(fold_seed, 1));
        if (options.init) model->params().copy_values_from(*options.init);
        FoldResult& result = report.folds[f];
        result.fold = f;
        result.train_indices = folds[f].train;
        result.test_indices = folds[f].test;
        result.history =
            train_model(*model, cohort, folds[f].train, train, derive_seed(fold_seed, 2), f, options.observer);
        if (options.observer && options.observer->on_evaluate) options.observer->on_evaluate(f, folds[f].test);
        result.probabilities = predict(*model, cohort, folds[f].test);
        std::vector<int> truth, pred;
        for (std::size_t i = 0; i < folds[f].test.size(); ++i) {
            truth.push_back(labels[folds[f].test[i]]);
            pred.push_back(result.probabilities[i] >= 0.5 ? 1 : 0);
        }
        result.metrics = compute_metrics(truth, pred);
        if (options.keep_models) result.model = std::move(model);
    };

    const std::size_t workers = std::min(train.workers, folds.size());
    if (workers <= 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) run_fold(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t f = next++; f < folds.size(); f = next++) {
                    try {
                        run_fold(f);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    report.summary = summarize(report.folds);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json metrics_to_json(const Metrics& m) {
    auto per_class = [](const ClassMetrics& c) {
        return nlohmann::json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
    };
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"per_class", {{"HC", per_class(m.per_class[0])}, {"SZ", per_class(m.per_class[1])}}},
            {"confusion", m.confusion}};
}

nlohmann::json mean_std_json(const MeanStd& v) { return {{"mean", v.mean}, {"std", v.std}}; }

}  // namespace

nlohmann::json report_to_json(const CvReport& report, const std::string& cohort_path) {
    nlohmann::json j;
    if (!cohort_path.empty()) j["cohort"] = cohort_path;
    j["model"] = to_json(report.model);
    j["train"] = to_json(report.train);
    j["folds"] = nlohmann::json::array();
    for (const auto& f : report.folds) {
        j["folds"].push_back({{"fold", f.fold},
                              {"test_indices", f.test_indices},
                              {"metrics", metrics_to_json(f.metrics)},
                              {"final_loss", f.history.epoch_loss.empty() ? 0.0 : f.history.epoch_loss.back()}});
    }
    const auto& s = report.summary;
    j["summary"] = {{"accuracy", mean_std_json(s.accuracy)},
                    {"precision", mean_std_json(s.precision)},
                    {"recall", mean_std_json(s.recall)},
                    {"f1", mean_std_json(s.f1)}};
    return j;
}

std::string format_results_table(std::span<const CvReport> reports) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-8s %-15s %-15s %-15s %-15s\n", "Modality", "Fusion", "Accuracy",
                  "Precision", "Recall", "F1");
    out << line;
    auto cell = [](const MeanStd& v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f", v.mean, v.std);
        return std::string(buf);
    };
    for (const auto& r : reports) {
        const auto& s = r.summary;
        std::snprintf(line, sizeof line, "%-10s %-8s %-16s %-16s %-16s %-16s\n", r.model.modalities.to_string().c_str(),
                      to_string(r.model.fusion).c_str(), cell(s.accuracy).c_str(), cell(s.precision).c_str(),
                      cell(s.recall).c_str(), cell(s.f1).c_str());
        out << line;
    }
    return out.str();
}

}  // namespace migt

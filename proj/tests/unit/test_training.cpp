#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <set>

#include "migt/errors.hpp"
#include "migt/training.hpp"
#include "../support/oracles.hpp"

using namespace migt;
using oracle::check_gradients;

namespace {

ModelConfig small_model(const char* modalities, Fusion fusion, const Cohort& cohort) {
    ModelConfig c;
    c.modalities = ModalitySet::parse(modalities);
    c.fusion = fusion;
    c.snp_dim = cohort.snp_dim();
    c.fnc_dim = cohort.fnc_dim();
    c.volume_extent = {8, 8, 8};
    c.genomic_hidden1 = 16;
    c.genomic_hidden2 = 12;
    c.connectome_hidden = 12;
    c.embed_dim = 8;
    c.volume_channels = {2, 2, 2};
    c.head_hidden1 = 8;
    c.head_hidden2 = 4;
    return c;
}

Cohort small_cohort(std::size_t n = 40, std::uint64_t seed = 1) {
    CohortSpec s;
    s.n_subjects = n;
    s.n_snps = 6;
    s.fnc_nodes = 5;
    s.volume_extent = {6, 8, 8};
    s.genomic_strength = 1.5;
    s.connectome_strength = 1.5;
    s.seed = seed;
    return generate_cohort(s);
}

std::vector<int> labels_with(std::size_t sz, std::size_t hc) {
    std::vector<int> v(sz, 1);
    v.insert(v.end(), hc, 0);
    return v;
}

void check_partition(const std::vector<Fold>& folds, std::span<const int> labels) {
    const std::size_t n = labels.size();
    std::vector<int> seen(n, 0);
    std::size_t total[2] = {0, 0};
    for (int y : labels) ++total[y];
    const std::size_t k = folds.size();
    for (const auto& f : folds) {
        EXPECT_EQ(f.train.size() + f.test.size(), n);
        std::set<std::size_t> train(f.train.begin(), f.train.end());
        std::size_t per_class[2] = {0, 0};
        for (auto i : f.test) {
            EXPECT_EQ(train.count(i), 0u) << "subject " << i << " in both train and test";
            ++seen[i];
            ++per_class[labels[i]];
        }
        for (int c = 0; c < 2; ++c) {
            const double expected = static_cast<double>(total[c]) / static_cast<double>(k);
            EXPECT_LE(std::abs(static_cast<double>(per_class[c]) - expected), 1.0);
        }
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << "subject " << i;
}

/// Leaves exactly `g` in x's gradient: d/dx Σ x·g = g.
void set_grad(const Tensor& x, std::vector<double> g) {
    x.zero_grad();
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(mul(x, Tensor(x.shape(), std::move(g))));
    }
    backward(loss, tape);
}

}  // namespace

TEST(Adam, MinimizesAQuadratic) {
    ParamStore store;
    auto x = store.add_zeros("x", {1}, ParamKind::Weight);
    Adam adam(store, 0.05);
    std::size_t steps = 0;
    for (; steps < 2000 && !(steps > 0 && std::abs(x.at(0) - 3.0) < 1e-3); ++steps) {
        set_grad(x, {2.0 * (x.at(0) - 3.0)});
        adam.step();
    }
    EXPECT_LT(std::abs(x.at(0) - 3.0), 1e-3) << "after " << steps << " steps";
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParamStore store;
    auto x = store.add_constant("x", {3}, 1.0, ParamKind::Weight);
    Adam adam(store, 0.01);
    set_grad(x, {5.0, -0.002, 0.0});
    adam.step();
    // Bias correction makes the first update lr·g/(|g| + ε).
    EXPECT_NEAR(x.at(0), 0.99, 1e-9);
    EXPECT_NEAR(x.at(1), 1.01, 1e-7);
    EXPECT_EQ(x.at(2), 1.0);
    EXPECT_EQ(adam.steps(), 1u);
    EXPECT_NEAR(adam.first_moment(0)[0], 0.5, 1e-15);
    EXPECT_NEAR(adam.second_moment(0)[0], 0.025, 1e-15);
}

TEST(Adam, RejectsFrozenParameters) {
    ParamStore frozen(false);
    frozen.add_zeros("x", {1}, ParamKind::Weight);
    EXPECT_THROW(Adam(frozen, 0.1), StateError);
}

TEST(Penalty, MatchesHandValues) {
    TrainConfig cfg;
    ParamStore store;
    store.add_constant("w", {1}, 2.0, ParamKind::Weight);
    EXPECT_NEAR(regularization_penalty(store, cfg).item(), 0.02, 1e-15);
    store.add_constant("b", {2}, -1.0, ParamKind::Bias);
    store.add_constant("g", {4}, 3.0, ParamKind::Norm);
    // 0.005·4 + 0.005·2 + 0.005·2
    EXPECT_NEAR(regularization_penalty(store, cfg).item(), 0.04, 1e-15);

    ParamStore zeros;
    zeros.add_zeros("w", {3}, ParamKind::Weight);
    zeros.add_zeros("b", {3}, ParamKind::Bias);
    EXPECT_EQ(regularization_penalty(zeros, cfg).item(), 0.0);
}

TEST(Penalty, GradientMatchesFiniteDifferences) {
    TrainConfig cfg;
    cfg.weight_l2 = 0.3;
    cfg.bias_l1 = 0.2;
    cfg.bias_l2 = 0.1;
    ParamStore store;
    Rng rng(1);
    store.add_glorot("w", {3, 4}, 3, 4, rng);
    auto b = store.add_zeros("b", {4}, ParamKind::Bias);
    // Keep biases away from the kink of |b|.
    for (std::size_t i = 0; i < 4; ++i) b.mutable_data()[i] = (i % 2 ? 0.5 : -0.7) + 0.1 * static_cast<double>(i);
    std::vector<Tensor> wrt;
    for (const auto& p : store.items()) wrt.push_back(p.value);
    auto r = check_gradients([&] { return regularization_penalty(store, cfg); }, wrt);
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(TrainConfig, ValidationAndJson) {
    TrainConfig c;
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.dropout.p2 = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.epochs = 7;
    c.dropout.head = 0.1;
    c.seed = 99;
    auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.dropout.head, 0.1);
    EXPECT_THROW(train_config_from_json({{"epochs", -1.5}}), ConfigError);
}

TEST(StratifiedKFold, TenSubjects) {
    const auto labels = labels_with(5, 5);
    auto folds = stratified_kfold(labels, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    for (const auto& f : folds) EXPECT_EQ(f.test.size(), 2u);
    check_partition(folds, labels);
}

TEST(StratifiedKFold, EightyTwoVersusOneHundredFour) {
    const auto labels = labels_with(82, 104);
    for (std::uint64_t seed : {0u, 1u, 17u}) {
        auto folds = stratified_kfold(labels, 5, seed);
        std::vector<std::size_t> sizes;
        for (const auto& f : folds) sizes.push_back(f.test.size());
        std::sort(sizes.begin(), sizes.end());
        EXPECT_EQ(sizes, (std::vector<std::size_t>{37, 37, 37, 37, 38}));
        check_partition(folds, labels);
    }
    auto a = stratified_kfold(labels, 5, 4), b = stratified_kfold(labels, 5, 4), c = stratified_kfold(labels, 5, 5);
    EXPECT_EQ(a.front().test, b.front().test);
    EXPECT_NE(a.front().test, c.front().test);
}

TEST(StratifiedKFold, RejectsTooManyFolds) {
    const auto labels = labels_with(3, 10);
    EXPECT_THROW(stratified_kfold(labels, 4, 0), ConfigError);
    EXPECT_THROW(stratified_kfold(labels, 1, 0), ConfigError);
    const std::vector<int> bad{0, 1, 2, 0, 1, 0};
    EXPECT_THROW(stratified_kfold(bad, 2, 0), ParameterError);
}

TEST(Metrics, ConstantPredictorOnBalancedSet) {
    const std::vector<int> truth{0, 0, 1, 1, 0, 1};
    const std::vector<int> pred(6, 1);
    auto m = compute_metrics(truth, pred);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
    // SZ: precision ½, recall 1, F1 ⅔; HC: all zero.
    EXPECT_DOUBLE_EQ(m.per_class[1].f1, 2.0 / 3.0);
    EXPECT_EQ(m.per_class[0].f1, 0.0);
    EXPECT_DOUBLE_EQ(m.f1, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.recall, 0.5);
    EXPECT_DOUBLE_EQ(m.precision, 0.25);
}

TEST(Metrics, AgreeWithIndependentCount) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<int> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(2));
            pred[i] = static_cast<int>(rng.below(2));
        }
        double tp = 0, tn = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth[i] && pred[i]) ++tp;
            if (!truth[i] && !pred[i]) ++tn;
            if (!truth[i] && pred[i]) ++fp;
            if (truth[i] && !pred[i]) ++fn;
        }
        auto safe = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
        const double p1 = safe(tp, tp + fp), r1 = safe(tp, tp + fn), f1 = safe(2 * p1 * r1, p1 + r1);
        const double p0 = safe(tn, tn + fn), r0 = safe(tn, tn + fp), f0 = safe(2 * p0 * r0, p0 + r0);
        auto m = compute_metrics(truth, pred);
        EXPECT_NEAR(m.accuracy, (tp + tn) / static_cast<double>(n), 1e-15);
        EXPECT_NEAR(m.precision, 0.5 * (p0 + p1), 1e-15);
        EXPECT_NEAR(m.recall, 0.5 * (r0 + r1), 1e-15);
        EXPECT_NEAR(m.f1, 0.5 * (f0 + f1), 1e-15);
        EXPECT_EQ(m.confusion[1][1], static_cast<std::size_t>(tp));
        EXPECT_EQ(m.confusion[0][1], static_cast<std::size_t>(fp));
    }
}

TEST(Metrics, PopulationStd) {
    const std::vector<double> v{1.0, 3.0};
    auto s = mean_std(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.std, 1.0);
}

TEST(Batching, PadsSmallerVolumesAtTheFarCorner) {
    auto cohort = small_cohort(10);
    auto cfg = small_model("S", Fusion::None, cohort);
    const std::vector<std::size_t> idx{2, 5};
    auto batch = make_batch(cohort, idx, cfg);
    ASSERT_EQ(batch.volume.shape(), (Shape{2, 1, 8, 8, 8}));
    EXPECT_FALSE(batch.genomic.defined());
    const auto& src = cohort.subjects[5].volume;
    for (std::size_t z = 0; z < 8; ++z)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
                const double got = batch.volume.at(512 + (z * 8 + y) * 8 + x);
                EXPECT_EQ(got, z < 6 ? src.at((z * 8 + y) * 8 + x) : 0.0);
            }
    EXPECT_EQ(batch.labels[1], static_cast<double>(cohort.subjects[5].label));

    cfg.volume_extent = {8, 8, 4};
    EXPECT_THROW(make_batch(cohort, idx, cfg), DimensionError);
    auto g = small_model("G", Fusion::None, cohort);
    g.snp_dim += 3;
    EXPECT_THROW(make_batch(cohort, idx, g), DimensionError);
}

TEST(Training, SmallLearningRateStepDecreasesLoss) {
    auto cohort = small_cohort(16);
    auto cfg = small_model("G,C,S", Fusion::Trans, cohort);
    TrainConfig tc;
    std::vector<std::size_t> idx(16);
    for (std::size_t i = 0; i < 16; ++i) idx[i] = i;
    const Batch batch = make_batch(cohort, idx, cfg);
    for (std::uint64_t init = 0; init < 20; ++init) {
        Model model(cfg, tc.dropout, init);
        auto loss_of = [&] {
            return add(bce_loss(model.forward(batch, ForwardContext{}).prob, batch.labels),
                       regularization_penalty(model.params(), tc));
        };
        Adam adam(model.params(), 1e-5);
        Tape tape;
        Tensor before;
        {
            TapeScope scope(tape);
            before = loss_of();
        }
        backward(before, tape);
        adam.step();
        EXPECT_LT(loss_of().item(), before.item()) << "init " << init;
    }
}

TEST(Training, LossFallsAndTestSubjectsStayUnseen) {
    auto cohort = small_cohort(40);
    auto cfg = small_model("G,C", Fusion::Concat, cohort);
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    std::mutex mu;
    std::vector<std::set<std::size_t>> trained(tc.folds);
    std::vector<std::set<std::size_t>> evaluated(tc.folds);
    TrainObserver obs;
    obs.on_batch = [&](std::size_t fold, std::size_t, std::span<const std::size_t> b) {
        std::lock_guard lock(mu);
        trained[fold].insert(b.begin(), b.end());
    };
    obs.on_evaluate = [&](std::size_t fold, std::span<const std::size_t> t) {
        std::lock_guard lock(mu);
        evaluated[fold].insert(t.begin(), t.end());
    };
    CvOptions opt;
    opt.observer = &obs;
    auto report = run_cv(cohort, cfg, tc, opt);
    ASSERT_EQ(report.folds.size(), 5u);
    for (std::size_t f = 0; f < 5; ++f) {
        const auto& fr = report.folds[f];
        for (auto i : evaluated[f]) EXPECT_EQ(trained[f].count(i), 0u) << "fold " << f << " trained on " << i;
        EXPECT_EQ(trained[f].size() + evaluated[f].size(), 40u);
        EXPECT_LT(fr.history.epoch_loss.back(), fr.history.epoch_loss.front());
        EXPECT_EQ(fr.probabilities.size(), fr.test_indices.size());
    }
    EXPECT_GT(report.summary.accuracy.mean, 0.6);
}

TEST(Training, WorkerCountDoesNotChangeResults) {
    auto cohort = small_cohort(20);
    auto cfg = small_model("G,C", Fusion::Aff, cohort);
    TrainConfig tc;
    tc.epochs = 3;
    tc.folds = 4;
    auto serial = run_cv(cohort, cfg, tc);
    tc.workers = 3;
    auto parallel = run_cv(cohort, cfg, tc);
    tc.workers = 1;
    // The worker count is recorded but the numbers must match bit for bit.
    for (std::size_t f = 0; f < 4; ++f) {
        ASSERT_EQ(serial.folds[f].probabilities.size(), parallel.folds[f].probabilities.size());
        for (std::size_t i = 0; i < serial.folds[f].probabilities.size(); ++i)
            EXPECT_EQ(serial.folds[f].probabilities[i], parallel.folds[f].probabilities[i]);
        EXPECT_EQ(serial.folds[f].history.epoch_loss, parallel.folds[f].history.epoch_loss);
    }
}

TEST(Training, InitialValuesAreLoadedIntoEveryFold) {
    auto cohort = small_cohort(20);
    auto cfg = small_model("G", Fusion::None, cohort);
    TrainConfig tc;
    tc.epochs = 1;
    tc.folds = 2;
    tc.learning_rate = 1e-12;
    Model init(cfg, tc.dropout, 77);
    CvOptions opt;
    opt.init = &init.params();
    opt.keep_models = true;
    auto report = run_cv(cohort, cfg, tc, opt);
    for (const auto& f : report.folds) {
        ASSERT_TRUE(f.model);
        const auto& a = f.model->params().items().front().value;
        const auto& b = init.params().items().front().value;
        EXPECT_NEAR(a.at(0), b.at(0), 1e-9);
    }
}

TEST(Report, JsonAndTable) {
    auto cohort = small_cohort(20);
    auto cfg = small_model("G", Fusion::None, cohort);
    TrainConfig tc;
    tc.epochs = 2;
    tc.folds = 2;
    auto report = run_cv(cohort, cfg, tc);
    auto j = report_to_json(report, "cohort_dir");
    EXPECT_EQ(j.at("cohort"), "cohort_dir");
    EXPECT_EQ(j.at("folds").size(), 2u);
    EXPECT_TRUE(j.at("folds")[0].at("metrics").contains("confusion"));
    EXPECT_EQ(j.at("model").at("modalities"), "G");
    EXPECT_EQ(report_to_json(run_cv(cohort, cfg, tc), "cohort_dir").dump(), j.dump());

    std::vector<CvReport> rows{report};
    auto table = format_results_table(rows);
    EXPECT_NE(table.find("Accuracy"), std::string::npos);
    EXPECT_NE(table.find("±"), std::string::npos);
    EXPECT_NE(table.find("none"), std::string::npos);
}

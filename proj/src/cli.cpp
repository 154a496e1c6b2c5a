#include "migt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "migt/errors.hpp"
#include "migt/mgt_io.hpp"
#include "migt/params.hpp"

namespace migt::cli {

namespace fs = std::filesystem;

namespace {

// A flag bound in one or more subcommands; set only if any of them saw it.
template <class T>
struct Flag {
    T value{};
    std::vector<CLI::Option*> options;

    bool given() const {
        return std::any_of(options.begin(), options.end(), [](const CLI::Option* o) { return o->count() > 0; });
    }
    void bind(CLI::App* app, const std::string& name, const std::string& help) {
        options.push_back(app->add_option(name, value, help));
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::size_t round_up8(std::size_t n) { return (n + 7) / 8 * 8; }

void require_out(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("an output directory is required (--out or \"out\" in the config)");
}

Cohort load_cohort(const RunConfig& cfg) {
    if (cfg.cohort_path.empty()) throw ConfigError("a cohort directory is required (--cohort or \"cohort_path\")");
    return read_cohort(cfg.cohort_path);
}

std::string modality_tag(const ModalitySet& m) {
    std::string tag;
    if (m.genomic) tag += 'G';
    if (m.connectome) tag += 'C';
    if (m.volume) tag += 'S';
    return tag;
}

std::vector<std::size_t> all_subjects(const Cohort& cohort) {
    std::vector<std::size_t> idx(cohort.subjects.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

// ---------------------------------------------------------------------------

int cmd_generate(RunConfig& cfg, std::ostream& out) {
    require_out(cfg);
    const Cohort cohort = generate_cohort(cfg.cohort);
    write_cohort(cohort, cfg.out);
    write_json(fs::path(cfg.out) / "config.json", to_json(cfg, "generate"));

    const auto labels = cohort.labels();
    const auto sz = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const auto e = cohort.volume_extent();
    out << "wrote " << labels.size() << " subjects (" << sz << " SZ, " << labels.size() - sz << " HC) to " << cfg.out
        << '\n';
    out << "  G " << cohort.snp_dim() << " values (" << cfg.cohort.n_snps << " SNPs x " << cfg.cohort.snp_categories
        << "), C " << cohort.fnc_dim() << " connections (" << cfg.cohort.fnc_nodes << " nodes), S " << e[0] << 'x'
        << e[1] << 'x' << e[2] << '\n';
    return 0;
}

int cmd_train(RunConfig& cfg, std::ostream& out) {
    require_out(cfg);
    const Cohort cohort = load_cohort(cfg);
    std::optional<Model> init;
    if (!cfg.init.empty()) {
        // The checkpoint fixes the architecture; it must fit this cohort
        // before any training starts.
        const auto manifest = read_checkpoint_manifest(cfg.init);
        cfg.model = model_config_from_json(manifest.at("meta").at("model"));
        check_cohort_compatible(cohort, cfg.model);
        init.emplace(cfg.model, cfg.train.dropout, 0);
        load_checkpoint_values(cfg.init, init->params());
    } else {
        fit_inputs_to_cohort(cfg, cohort);
    }
    cfg.model.validate();
    cfg.train.validate();
    check_cohort_compatible(cohort, cfg.model);

    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    write_json(dir / "config.json", to_json(cfg, "train"));

    CvOptions options;
    options.keep_models = true;
    options.init = init ? &init->params() : nullptr;
    const CvReport report = run_cv(cohort, cfg.model, cfg.train, options);

    write_json(dir / "report.json", report_to_json(report, cfg.cohort_path));
    std::ostringstream text;
    text << format_results_table(std::span<const CvReport>(&report, 1));
    char line[128];
    for (const auto& f : report.folds) {
        std::snprintf(line, sizeof line, "fold %zu: accuracy %.4f on %zu subjects, final loss %.6f\n", f.fold,
                      f.metrics.accuracy, f.test_indices.size(),
                      f.history.epoch_loss.empty() ? 0.0 : f.history.epoch_loss.back());
        text << line;
    }
    write_text(dir / "report.txt", text.str());
    out << text.str();

    for (const auto& f : report.folds) {
        nlohmann::json meta{{"model", to_json(cfg.model)},
                            {"train", to_json(cfg.train)},
                            {"fold", f.fold},
                            {"cohort", cfg.cohort_path},
                            {"train_indices", f.train_indices},
                            {"test_indices", f.test_indices}};
        save_checkpoint(dir / "folds" / ("fold_" + std::to_string(f.fold)), f.model->params(), meta);
    }
    return 0;
}

int cmd_ablate(RunConfig& cfg, std::ostream& out, std::ostream& err) {
    require_out(cfg);
    const Cohort cohort = load_cohort(cfg);
    fit_inputs_to_cohort(cfg, cohort);
    cfg.train.validate();

    std::vector<AblationRow> rows;
    for (const auto& row : ablation_grid()) {
        if (cfg.rows.empty() || std::find(cfg.rows.begin(), cfg.rows.end(), row.label) != cfg.rows.end())
            rows.push_back(row);
    }
    for (const auto& wanted : cfg.rows) {
        if (std::none_of(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.label == wanted; })) {
            std::string known;
            for (const auto& r : ablation_grid()) known += (known.empty() ? "" : ", ") + r.label;
            throw ConfigError("unknown ablation row '" + wanted + "' (expected one of " + known + ")");
        }
    }

    const auto labels = cohort.labels();
    const auto folds = stratified_kfold(labels, cfg.train.folds, cfg.train.seed);
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    write_json(dir / "config.json", to_json(cfg, "ablate"));

    std::vector<CvReport> reports;
    nlohmann::json row_json = nlohmann::json::array();
    bool all_match = true;
    for (const auto& row : rows) {
        ModelConfig m = cfg.model;
        m.modalities = row.modalities;
        m.fusion = row.fusion;
        CvOptions options;
        options.folds = folds;
        reports.push_back(run_cv(cohort, m, cfg.train, options));
        const auto& rep = reports.back();
        bool match = rep.folds.size() == folds.size();
        for (std::size_t f = 0; match && f < folds.size(); ++f) {
            match = rep.folds[f].test_indices == folds[f].test && rep.folds[f].train_indices == folds[f].train;
        }
        all_match = all_match && match;
        row_json.push_back({{"label", row.label}, {"splits_match", match}, {"report", report_to_json(rep)}});
        char line[128];
        std::snprintf(line, sizeof line, "%-10s accuracy %.3f ± %.3f\n", row.label.c_str(), rep.summary.accuracy.mean,
                      rep.summary.accuracy.std);
        out << line << std::flush;
    }

    nlohmann::json splits = nlohmann::json::array();
    for (std::size_t f = 0; f < folds.size(); ++f) splits.push_back({{"fold", f}, {"test_indices", folds[f].test}});
    write_json(dir / "ablation.json", {{"cohort", cfg.cohort_path},
                                       {"splits", splits},
                                       {"shared_splits_verified", all_match},
                                       {"rows", row_json}});
    const std::string table = format_results_table(reports);
    write_text(dir / "ablation.txt", table);
    out << table;
    if (!all_match) {
        err << "error: fold splits differ between ablation rows\n";
        return 1;
    }
    return 0;
}

int cmd_interpret(RunConfig& cfg, std::ostream& out, std::ostream& err) {
    require_out(cfg);
    const auto& opt = cfg.interpret;
    if (opt.checkpoint.empty()) throw ConfigError("a checkpoint directory is required (--checkpoint)");
    if (opt.top_snps == 0 && opt.top_connections == 0 && !opt.volume_maps)
        throw ConfigError("nothing to do: pass --top-snps, --top-connections or --volume-maps");
    const Cohort cohort = load_cohort(cfg);
    const auto manifest = read_checkpoint_manifest(opt.checkpoint);
    const auto& meta = manifest.at("meta");
    cfg.model = model_config_from_json(meta.at("model"));
    check_cohort_compatible(cohort, cfg.model);
    // Explanations need input gradients only, so the parameters stay frozen.
    Model model(cfg.model, DropoutRates{}, 0, false);
    load_checkpoint_values(opt.checkpoint, model.params());

    std::vector<std::size_t> subjects;
    if (opt.subjects == "all") {
        subjects = all_subjects(cohort);
    } else if (opt.subjects == "test") {
        subjects = meta.contains("test_indices") ? meta.at("test_indices").get<std::vector<std::size_t>>()
                                                 : all_subjects(cohort);
    } else {
        throw ConfigError("--subjects must be 'test' or 'all', got '" + opt.subjects + "'");
    }
    for (auto s : subjects)
        if (s >= cohort.subjects.size())
            throw DimensionError("checkpoint subject index " + std::to_string(s) + " is outside the cohort");

    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    write_json(dir / "config.json", to_json(cfg, "interpret"));
    bool any_signal = false;
    auto planted = [](const std::vector<std::size_t>& truth, std::size_t j) {
        return std::find(truth.begin(), truth.end(), j) != truth.end();
    };

    if (opt.top_snps > 0) {
        const auto r = snp_ranking(model, cohort, subjects, opt.top_snps, opt.target);
        write_scores_csv(dir / "snp_scores.csv", r.scores);
        nlohmann::json top = nlohmann::json::array();
        out << "top SNPs (" << to_string(opt.target) << "):\n";
        for (std::size_t i = 0; i < r.top.size(); ++i) {
            const auto j = r.top[i];
            const bool is_planted = planted(cohort.truth.causal_snps, j);
            top.push_back({{"rank", i + 1}, {"snp", j}, {"score", r.scores[j]}, {"planted", is_planted}});
            out << "  " << i + 1 << ". SNP " << j << "  score " << r.scores[j] << (is_planted ? "  (planted)" : "")
                << '\n';
        }
        write_json(dir / "top_snps.json",
                   {{"target", to_string(opt.target)}, {"subjects", subjects.size()}, {"top", top}});
        any_signal |= std::any_of(r.scores.begin(), r.scores.end(), [](double v) { return v > 0.0; });
    }

    if (opt.top_connections > 0) {
        const auto sel = connectome_top_connections(model, cohort, subjects, opt.top_connections, 0.0, opt.target);
        write_scores_csv(dir / "connection_scores.csv", sel.scores);
        nlohmann::json top = nlohmann::json::array();
        out << "top connections (" << to_string(opt.target) << "):\n";
        for (std::size_t i = 0; i < sel.selected.size(); ++i) {
            const auto j = sel.selected[i];
            const auto [row, col] = sel.node_pairs[i];
            const bool is_planted = planted(cohort.truth.causal_connections, j);
            top.push_back({{"rank", i + 1},
                           {"connection", j},
                           {"nodes", {row, col}},
                           {"score", sel.scores[j]},
                           {"planted", is_planted}});
            out << "  " << i + 1 << ". connection " << j << " (" << row << ", " << col << ")  score " << sel.scores[j]
                << (is_planted ? "  (planted)" : "") << '\n';
        }
        write_json(dir / "top_connections.json",
                   {{"target", to_string(opt.target)}, {"subjects", subjects.size()}, {"top", top}});
        any_signal |= !sel.selected.empty();
    }

    if (opt.volume_maps) {
        const std::size_t n = opt.max_maps == 0 ? subjects.size() : std::min(opt.max_maps, subjects.size());
        nlohmann::json maps = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& subject = cohort.subjects[subjects[i]];
            const auto vm = volume_attention_map(model, cohort, subjects[i], opt.target);
            const fs::path sub = dir / "volume_maps" / subject.id;
            fs::create_directories(sub);
            write_mgt(sub / "map.mgt", vm.map);
            write_pgm_slices(sub, vm.map, subject.id);
            maps.push_back({{"id", subject.id},
                            {"index", subjects[i]},
                            {"label", subject.label},
                            {"attention_scale", vm.attention_scale},
                            {"all_zero", vm.all_zero},
                            {"blob_contrast", finite_or_null(blob_contrast(vm.map, cohort.truth))}});
            any_signal |= !vm.all_zero;
        }
        write_json(dir / "volume_maps.json", {{"target", to_string(opt.target)}, {"maps", maps}});
        out << "wrote " << n << " volume maps under " << (dir / "volume_maps").string() << '\n';
    }

    if (!any_signal) err << "warning: every explanation score is zero; the checkpoint carries no signal\n";
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RunConfig& c, const std::string& command) {
    const auto& i = c.interpret;
    nlohmann::json rows = c.rows;
    return {{"command", command},
            {"seed", c.seed},
            {"out", c.out},
            {"cohort_path", c.cohort_path},
            {"cohort", to_json(c.cohort)},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"init", c.init},
            {"ablate", {{"rows", rows}}},
            {"interpret",
             {{"checkpoint", i.checkpoint},
              {"top_snps", i.top_snps},
              {"top_connections", i.top_connections},
              {"volume_maps", i.volume_maps},
              {"subjects", i.subjects},
              {"target", to_string(i.target)},
              {"max_maps", i.max_maps}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    static const char* const known[] = {"command", "seed",  "out",    "cohort_path", "cohort",
                                        "model",   "train", "init",   "ablate",      "interpret"};
    for (const auto& item : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return item.key() == k; }) ==
            std::end(known))
            throw ConfigError("unknown run config key '" + item.key() + "'");
    }
    try {
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
        if (j.contains("cohort_path")) c.cohort_path = j.at("cohort_path").get<std::string>();
        if (j.contains("init")) c.init = j.at("init").get<std::string>();
        if (j.contains("cohort")) c.cohort = cohort_spec_from_json(j.at("cohort"), c.cohort);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            c.model = model_config_from_json(m, c.model);
            c.explicit_snp_dim |= m.contains("snp_dim");
            c.explicit_fnc_dim |= m.contains("fnc_dim");
            c.explicit_volume_extent |= m.contains("volume_extent");
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
        if (j.contains("ablate") && j.at("ablate").contains("rows"))
            c.rows = j.at("ablate").at("rows").get<std::vector<std::string>>();
        if (j.contains("interpret")) {
            const auto& i = j.at("interpret");
            auto& o = c.interpret;
            if (i.contains("checkpoint")) o.checkpoint = i.at("checkpoint").get<std::string>();
            if (i.contains("top_snps")) o.top_snps = i.at("top_snps").get<std::size_t>();
            if (i.contains("top_connections")) o.top_connections = i.at("top_connections").get<std::size_t>();
            if (i.contains("volume_maps")) o.volume_maps = i.at("volume_maps").get<bool>();
            if (i.contains("subjects")) o.subjects = i.at("subjects").get<std::string>();
            if (i.contains("target")) o.target = target_class_from_string(i.at("target").get<std::string>());
            if (i.contains("max_maps")) o.max_maps = i.at("max_maps").get<std::size_t>();
        }
        // A top-level seed drives both the generator and training.
        if (j.contains("seed")) {
            c.seed = j.at("seed").get<std::uint64_t>();
            c.cohort.seed = c.seed;
            c.train.seed = c.seed;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return c;
}

void fit_inputs_to_cohort(RunConfig& config, const Cohort& cohort) {
    if (!config.explicit_snp_dim) config.model.snp_dim = cohort.snp_dim();
    if (!config.explicit_fnc_dim) config.model.fnc_dim = cohort.fnc_dim();
    if (!config.explicit_volume_extent) {
        const auto e = cohort.volume_extent();
        for (std::size_t a = 0; a < 3; ++a) config.model.volume_extent[a] = round_up8(e[a]);
    }
}

std::vector<AblationRow> ablation_grid() {
    std::vector<AblationRow> rows;
    for (const char* single : {"G", "C", "S"}) rows.push_back({single, ModalitySet::parse(single), Fusion::None});
    for (const char* multi : {"G,C", "G,C,S"}) {
        const auto set = ModalitySet::parse(multi);
        for (Fusion f : {Fusion::Concat, Fusion::Aff, Fusion::Trans})
            rows.push_back({modality_tag(set) + "-" + to_string(f), set, f});
    }
    return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Imaging-genomics transformer: synthetic cohorts, cross-validated training, ablation and "
                 "interpretation.",
                 "migt"};
    app.require_subcommand(1);
    app.fallthrough();

    Flag<std::string> config_path, out_dir;
    Flag<std::uint64_t> seed;
    config_path.bind(&app, "--config", "JSON run configuration (CLI flags override it)");
    seed.bind(&app, "--seed", "Seed for cohort generation, fold splits and training");
    out_dir.bind(&app, "--out", "Output directory");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic cohort with planted label signal");
    Flag<std::size_t> n_subjects, n_snps, nodes, causal_snps, causal_connections;
    Flag<double> sz_fraction, g_strength, c_strength, s_strength, x_strength;
    Flag<std::vector<std::size_t>> extent;
    n_subjects.bind(gen, "--subjects", "Number of subjects");
    sz_fraction.bind(gen, "--sz-fraction", "Fraction of subjects labelled SZ");
    n_snps.bind(gen, "--snps", "Number of SNPs");
    nodes.bind(gen, "--nodes", "Connectome nodes (connections = n(n-1)/2)");
    extent.bind(gen, "--extent", "Volume extent D H W");
    extent.options.back()->expected(3);
    g_strength.bind(gen, "--genomic-strength", "Label signal in causal SNPs");
    c_strength.bind(gen, "--connectome-strength", "Label signal in causal connections");
    s_strength.bind(gen, "--volume-strength", "Label signal in the volume blob");
    x_strength.bind(gen, "--cross-strength", "Genomic-connectome interaction signal");
    causal_snps.bind(gen, "--causal-snps", "Number of causal SNPs");
    causal_connections.bind(gen, "--causal-connections", "Number of causal connections");

    // train / ablate share the training flags
    auto* train = app.add_subcommand("train", "Cross-validated training of one configuration");
    auto* ablate = app.add_subcommand("ablate", "Nine-row modality and fusion grid on shared fold splits");
    Flag<std::string> cohort_path, modalities, fusion, init;
    Flag<std::size_t> epochs, batch_size, folds, workers, embed_dim;
    Flag<double> learning_rate;
    Flag<std::vector<std::string>> rows;
    for (auto* sub : {train, ablate}) {
        cohort_path.bind(sub, "--cohort", "Cohort directory");
        epochs.bind(sub, "--epochs", "Training epochs per fold");
        learning_rate.bind(sub, "--learning-rate", "Adam learning rate");
        batch_size.bind(sub, "--batch-size", "Mini-batch size");
        folds.bind(sub, "--folds", "Cross-validation folds");
        workers.bind(sub, "--workers", "Folds trained concurrently");
        embed_dim.bind(sub, "--embed-dim", "Modality embedding width");
    }
    modalities.bind(train, "--modalities", "Comma-separated subset of G,C,S");
    fusion.bind(train, "--fusion", "none, concat, aff or trans");
    init.bind(train, "--init", "Checkpoint providing the architecture and initial values");
    rows.bind(ablate, "--rows", "Subset of grid rows (G C S GC-concat GC-aff GC-trans GCS-concat GCS-aff GCS-trans)");

    // interpret
    auto* interp = app.add_subcommand("interpret", "Saliency rankings and volume maps from a fold checkpoint");
    Flag<std::string> checkpoint, subject_set, target;
    Flag<std::size_t> top_snps, top_connections, max_maps;
    cohort_path.bind(interp, "--cohort", "Cohort directory");
    checkpoint.bind(interp, "--checkpoint", "Fold checkpoint directory written by train");
    top_snps.bind(interp, "--top-snps", "Report the k highest-scoring SNPs");
    top_connections.bind(interp, "--top-connections", "Report the k highest-scoring connections");
    auto* volume_maps = interp->add_flag("--volume-maps", "Write per-subject volume attention maps");
    subject_set.bind(interp, "--subjects", "test (the checkpoint's held-out fold) or all");
    target.bind(interp, "--target", "Class to explain: SZ or HC");
    max_maps.bind(interp, "--max-maps", "Write at most this many volume maps (0 = no limit)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (config_path.given()) cfg = run_config_from_json(read_json_file(config_path.value));
        if (seed.given()) {
            cfg.seed = seed.value;
            cfg.cohort.seed = seed.value;
            cfg.train.seed = seed.value;
        }
        if (out_dir.given()) cfg.out = out_dir.value;
        if (cohort_path.given()) cfg.cohort_path = cohort_path.value;

        if (gen->parsed()) {
            auto& s = cfg.cohort;
            if (n_subjects.given()) s.n_subjects = n_subjects.value;
            if (sz_fraction.given()) s.sz_fraction = sz_fraction.value;
            if (n_snps.given()) s.n_snps = n_snps.value;
            if (nodes.given()) s.fnc_nodes = nodes.value;
            if (extent.given()) std::copy_n(extent.value.begin(), 3, s.volume_extent.begin());
            if (g_strength.given()) s.genomic_strength = g_strength.value;
            if (c_strength.given()) s.connectome_strength = c_strength.value;
            if (s_strength.given()) s.volume_strength = s_strength.value;
            if (x_strength.given()) s.cross_modal_strength = x_strength.value;
            if (causal_snps.given()) s.causal_snps = causal_snps.value;
            if (causal_connections.given()) s.causal_connections = causal_connections.value;
            return cmd_generate(cfg, out);
        }
        if (train->parsed() || ablate->parsed()) {
            auto& t = cfg.train;
            if (epochs.given()) t.epochs = epochs.value;
            if (learning_rate.given()) t.learning_rate = learning_rate.value;
            if (batch_size.given()) t.batch_size = batch_size.value;
            if (folds.given()) t.folds = folds.value;
            if (workers.given()) t.workers = workers.value;
            if (embed_dim.given()) cfg.model.embed_dim = embed_dim.value;
            if (train->parsed()) {
                if (modalities.given()) cfg.model.modalities = ModalitySet::parse(modalities.value);
                if (fusion.given()) cfg.model.fusion = fusion_from_string(fusion.value);
                if (init.given()) cfg.init = init.value;
                return cmd_train(cfg, out);
            }
            if (rows.given()) cfg.rows = rows.value;
            return cmd_ablate(cfg, out, err);
        }
        auto& o = cfg.interpret;
        if (checkpoint.given()) o.checkpoint = checkpoint.value;
        if (top_snps.given()) o.top_snps = top_snps.value;
        if (top_connections.given()) o.top_connections = top_connections.value;
        if (volume_maps->count() > 0) o.volume_maps = true;
        if (subject_set.given()) o.subjects = subject_set.value;
        if (target.given()) o.target = target_class_from_string(target.value);
        if (max_maps.given()) o.max_maps = max_maps.value;
        return cmd_interpret(cfg, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace migt::cli

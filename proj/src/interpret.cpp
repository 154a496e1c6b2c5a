#include "migt/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "migt/errors.hpp"
#include "migt/training.hpp"

namespace migt {

std::string to_string(TargetClass target) { return target == TargetClass::SZ ? "SZ" : "HC"; }

TargetClass target_class_from_string(const std::string& name) {
    if (name == "SZ" || name == "sz") return TargetClass::SZ;
    if (name == "HC" || name == "hc") return TargetClass::HC;
    throw ConfigError("unknown target class '" + name + "' (expected SZ or HC)");
}

namespace {

// Saliency needs gradients with respect to inputs and intermediates only, so
// it runs on a copy whose parameters do not track gradients. That also keeps
// concurrent explanations from touching the caller's gradient buffers.
const Model& frozen_view(const Model& model, std::optional<Model>& holder) {
    if (!model.params().trainable()) return model;
    holder.emplace(model.frozen_copy());
    return *holder;
}

Tensor class_score(const Tensor& logit, TargetClass target) {
    return sum(target == TargetClass::SZ ? logit : scale(logit, -1.0));
}

// Mean over heads and query tokens of each token's strongest attention weight.
double attention_scale(const std::vector<Tensor>& heads) {
    if (heads.empty()) return 1.0;
    double total = 0.0;
    std::size_t rows = 0;
    for (const auto& w : heads) {
        const std::size_t n = w.dim(w.rank() - 1);
        auto d = w.data();
        for (std::size_t r = 0; r * n < d.size(); ++r, ++rows)
            total += *std::max_element(d.begin() + r * n, d.begin() + (r + 1) * n);
    }
    return total / static_cast<double>(rows);
}

}  // namespace

std::vector<double> gradcam_pp(std::span<const double> activations, std::span<const double> gradients,
                               std::size_t channels) {
    if (channels == 0 || activations.size() != gradients.size() || activations.size() % channels != 0) {
        throw DimensionError("gradcam_pp: activations and gradients must both be [C×V]");
    }
    const std::size_t voxels = activations.size() / channels;
    std::vector<double> cam(voxels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* a = activations.data() + c * voxels;
        const double* g = gradients.data() + c * voxels;
        const double a_sum = std::accumulate(a, a + voxels, 0.0);
        double weight = 0.0;
        for (std::size_t v = 0; v < voxels; ++v) {
            const double g2 = g[v] * g[v];
            const double denom = 2.0 * g2 + a_sum * g2 * g[v];
            const double alpha = denom != 0.0 ? g2 / denom : 0.0;
            weight += alpha * std::max(g[v], 0.0);
        }
        for (std::size_t v = 0; v < voxels; ++v) cam[v] += weight * a[v];
    }
    for (auto& v : cam) v = std::max(v, 0.0);
    return cam;
}

std::vector<double> trilinear_upsample(std::span<const double> grid, std::array<std::size_t, 3> in,
                                       std::array<std::size_t, 3> out) {
    if (grid.size() != in[0] * in[1] * in[2]) throw DimensionError("trilinear_upsample: grid size mismatch");
    // Per-axis source index pair and blend weight for every output coordinate.
    struct Tap {
        std::size_t lo, hi;
        double t;
    };
    auto taps = [](std::size_t n_in, std::size_t n_out) {
        std::vector<Tap> result(n_out);
        const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::size_t i = 0; i < n_out; ++i) {
            double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, n_in - 1);
            result[i] = {lo, hi, src - static_cast<double>(lo)};
        }
        return result;
    };
    const auto tz = taps(in[0], out[0]), ty = taps(in[1], out[1]), tx = taps(in[2], out[2]);
    auto at = [&](std::size_t z, std::size_t y, std::size_t x) { return grid[(z * in[1] + y) * in[2] + x]; };
    std::vector<double> result(out[0] * out[1] * out[2]);
    std::size_t i = 0;
    for (const auto& z : tz)
        for (const auto& y : ty)
            for (const auto& x : tx) {
                auto lerp_x = [&](std::size_t zz, std::size_t yy) {
                    return (1.0 - x.t) * at(zz, yy, x.lo) + x.t * at(zz, yy, x.hi);
                };
                auto lerp_y = [&](std::size_t zz) { return (1.0 - y.t) * lerp_x(zz, y.lo) + y.t * lerp_x(zz, y.hi); };
                result[i++] = (1.0 - z.t) * lerp_y(z.lo) + z.t * lerp_y(z.hi);
            }
    return result;
}

VolumeMap volume_attention_map(const Model& model, const Cohort& cohort, std::size_t subject, TargetClass target) {
    if (!model.config().modalities.volume) throw ConfigError("volume attention maps need a model with the S modality");
    if (subject >= cohort.subjects.size()) throw DimensionError("subject index out of range");
    std::optional<Model> holder;
    const Model& m = frozen_view(model, holder);

    const std::size_t index[] = {subject};
    Batch batch = make_batch(cohort, index, m.config());
    batch.volume = batch.volume.clone_leaf(true);
    Tape tape;
    ModelOutput out;
    Tensor score;
    {
        TapeScope scope(tape);
        out = m.forward(batch, ForwardContext{Mode::Eval, nullptr, true});
        score = class_score(out.logit, target);
    }
    backward(score, tape);

    const Tensor& features = out.explain.ssa_output;  // [1×C×d×h×w]
    const std::size_t channels = features.dim(1);
    const std::array<std::size_t, 3> feat{features.dim(2), features.dim(3), features.dim(4)};
    auto cam = gradcam_pp(features.data(), features.grad(), channels);

    VolumeMap result;
    result.attention_scale = attention_scale(out.explain.gcs_attention);
    for (auto& v : cam) v *= result.attention_scale;

    const auto& model_extent = m.config().volume_extent;
    const auto full = trilinear_upsample(cam, feat, model_extent);
    const auto extent = cohort.volume_extent();
    std::vector<double> map(extent[0] * extent[1] * extent[2]);
    std::size_t i = 0;
    for (std::size_t z = 0; z < extent[0]; ++z)
        for (std::size_t y = 0; y < extent[1]; ++y)
            for (std::size_t x = 0; x < extent[2]; ++x) map[i++] = full[(z * model_extent[1] + y) * model_extent[2] + x];
    const double peak = *std::max_element(map.begin(), map.end());
    result.all_zero = !(peak > 0.0);
    if (!result.all_zero)
        for (auto& v : map) v /= peak;
    else
        std::fill(map.begin(), map.end(), 0.0);
    result.map = Tensor({extent[0], extent[1], extent[2]}, std::move(map));
    return result;
}

double blob_contrast(const Tensor& map, const GroundTruth& truth) {
    if (map.rank() != 3) throw DimensionError("blob_contrast: expected a [D×H×W] map");
    const auto mask = truth.blob_mask({map.dim(0), map.dim(1), map.dim(2)});
    double inside = 0.0, outside = 0.0;
    std::size_t n_in = 0, n_out = 0;
    auto d = map.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (mask[i]) {
            inside += d[i];
            ++n_in;
        } else {
            outside += d[i];
            ++n_out;
        }
    }
    if (n_in == 0 || n_out == 0) throw ConfigError("blob_contrast: blob mask is empty or covers the whole volume");
    inside /= static_cast<double>(n_in);
    outside /= static_cast<double>(n_out);
    if (outside == 0.0) return inside > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return inside / outside;
}

// ---------------------------------------------------------------------------

InputSaliency input_saliency(const Model& model, const Cohort& cohort, std::span<const std::size_t> subjects,
                             TargetClass target) {
    std::optional<Model> holder;
    const Model& m = frozen_view(model, holder);
    const auto& mods = m.config().modalities;
    InputSaliency result;
    if (mods.genomic) result.genomic.assign(m.config().snp_dim, 0.0);
    if (mods.connectome) result.connectome.assign(m.config().fnc_dim, 0.0);
    if ((!mods.genomic && !mods.connectome) || subjects.empty()) return result;

    auto accumulate = [](const Tensor& input, std::vector<double>& into) {
        const std::size_t width = into.size();
        auto x = input.data();
        auto g = input.grad();
        for (std::size_t i = 0; i < x.size(); ++i) into[i % width] += std::abs(g[i] * x[i]);
    };
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < subjects.size(); start += kChunk) {
        Batch batch = make_batch(cohort, subjects.subspan(start, std::min(kChunk, subjects.size() - start)), m.config());
        if (mods.genomic) batch.genomic = batch.genomic.clone_leaf(true);
        if (mods.connectome) batch.connectome = batch.connectome.clone_leaf(true);
        Tape tape;
        Tensor score;
        {
            TapeScope scope(tape);
            // Eval-mode forward is per-sample, so the gradient of the summed
            // score gives every subject's own input gradient.
            score = class_score(m.forward(batch, ForwardContext{}).logit, target);
        }
        backward(score, tape);
        if (mods.genomic) accumulate(batch.genomic, result.genomic);
        if (mods.connectome) accumulate(batch.connectome, result.connectome);
    }
    const double n = static_cast<double>(subjects.size());
    for (auto& v : result.genomic) v /= n;
    for (auto& v : result.connectome) v /= n;
    return result;
}

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<double> group_sum(std::span<const double> values, std::size_t categories) {
    if (categories == 0 || values.size() % categories != 0) {
        throw DimensionError("group_sum: " + std::to_string(values.size()) + " values do not split into groups of " +
                             std::to_string(categories));
    }
    std::vector<double> out(values.size() / categories, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) out[i / categories] += values[i];
    return out;
}

ConnectionSelection connectome_top_connections(const Model& model, const Cohort& cohort,
                                               std::span<const std::size_t> subjects, std::size_t top_k,
                                               double threshold, TargetClass target) {
    if (!model.config().modalities.connectome) throw ConfigError("connection scores need a model with the C modality");
    ConnectionSelection sel;
    sel.scores = input_saliency(model, cohort, subjects, target).connectome;
    for (auto j : rank_descending(sel.scores)) {
        if (!(sel.scores[j] > 0.0)) break;
        if (threshold > 0.0 ? sel.scores[j] <= threshold : sel.selected.size() >= top_k) break;
        sel.selected.push_back(j);
    }
    const std::size_t nodes = nodes_for_connections(sel.scores.size());
    for (auto j : sel.selected) sel.node_pairs.push_back(connection_nodes(j, nodes));
    return sel;
}

SnpRanking snp_ranking(const Model& model, const Cohort& cohort, std::span<const std::size_t> subjects,
                       std::size_t top_k, TargetClass target) {
    if (!model.config().modalities.genomic) throw ConfigError("SNP ranking needs a model with the G modality");
    SnpRanking r;
    r.scores = group_sum(input_saliency(model, cohort, subjects, target).genomic, cohort.spec.snp_categories);
    r.ranked = rank_descending(r.scores);
    for (auto j : r.ranked) {
        if (r.top.size() >= top_k || !(r.scores[j] > 0.0)) break;
        r.top.push_back(j);
    }
    return r;
}

// ---------------------------------------------------------------------------

void write_scores_csv(const std::filesystem::path& path, std::span<const double> scores) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    std::vector<std::size_t> rank(scores.size());
    const auto order = rank_descending(scores);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    out << "index,score,rank\n";
    char line[96];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%zu\n", i, scores[i], rank[i]);
        out << line;
    }
}

void write_pgm_slices(const std::filesystem::path& dir, const Tensor& volume_map, const std::string& stem) {
    if (volume_map.rank() != 3) throw DimensionError("write_pgm_slices: expected a [D×H×W] map");
    std::filesystem::create_directories(dir);
    const std::size_t D = volume_map.dim(0), H = volume_map.dim(1), W = volume_map.dim(2);
    auto d = volume_map.data();
    std::vector<unsigned char> pixels(H * W);
    for (std::size_t z = 0; z < D; ++z) {
        for (std::size_t i = 0; i < H * W; ++i) {
            pixels[i] = static_cast<unsigned char>(std::lround(std::clamp(d[z * H * W + i], 0.0, 1.0) * 255.0));
        }
        char name[64];
        std::snprintf(name, sizeof name, "_z%03zu.pgm", z);
        const auto path = dir / (stem + name);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << "P5\n" << W << ' ' << H << "\n255\n";
        out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    }
}

}  // namespace migt

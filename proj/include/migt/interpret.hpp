#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "migt/data.hpp"
#include "migt/model.hpp"

namespace migt {

/// Class whose score is explained: the SZ logit, or its negation for HC.
enum class TargetClass { SZ, HC };

std::string to_string(TargetClass target);
TargetClass target_class_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Volume maps

struct VolumeMap {
    Tensor map;                    // [D×H×W], values in [0, 1]
    double attention_scale = 1.0;  // GCS attention factor applied before normalization
    bool all_zero = true;
};

/// GradCAM++-style map over the spatial-sequence-attention output for one
/// subject, upsampled trilinearly to the cohort volume extents and
/// max-normalized. A model without a volume pathway is a ConfigError.
VolumeMap volume_attention_map(const Model& model, const Cohort& cohort, std::size_t subject,
                               TargetClass target = TargetClass::SZ);

/// GradCAM++ channel weighting: activations A and gradients g are [C×V].
/// Returns the rectified weighted channel sum [V].
std::vector<double> gradcam_pp(std::span<const double> activations, std::span<const double> gradients,
                               std::size_t channels);

/// Trilinear resize of a [d×h×w] grid to `out` extents (half-pixel centers,
/// edge-clamped).
std::vector<double> trilinear_upsample(std::span<const double> grid, std::array<std::size_t, 3> in,
                                       std::array<std::size_t, 3> out);

/// Mean map value inside the planted blob divided by the mean outside it.
/// Returns 0 when both are zero, +inf when only the outside is zero.
double blob_contrast(const Tensor& map, const GroundTruth& truth);

// ---------------------------------------------------------------------------
// Gradient×input saliency

struct InputSaliency {
    std::vector<double> genomic;     // [d] mean |∂score/∂G_j · G_j|
    std::vector<double> connectome;  // [f] mean |∂score/∂C_j · C_j|
};

/// Averages over the listed subjects. Entries for modalities the model does
/// not use are left empty.
InputSaliency input_saliency(const Model& model, const Cohort& cohort, std::span<const std::size_t> subjects,
                             TargetClass target = TargetClass::SZ);

/// Indices ordered by descending score, ties broken by lower index.
std::vector<std::size_t> rank_descending(std::span<const double> scores);

struct ConnectionSelection {
    std::vector<double> scores;  // [f]
    std::vector<std::size_t> selected;
    std::vector<std::pair<std::size_t, std::size_t>> node_pairs;  // (row, col) per selected index
};

/// Selects the top_k connections (by score, positive scores only), or, when
/// `threshold` is positive, every connection whose score exceeds it.
ConnectionSelection connectome_top_connections(const Model& model, const Cohort& cohort,
                                               std::span<const std::size_t> subjects, std::size_t top_k,
                                               double threshold = 0.0, TargetClass target = TargetClass::SZ);

struct SnpRanking {
    std::vector<double> scores;       // [n_snps], one-hot groups summed
    std::vector<std::size_t> ranked;  // all SNPs by descending score
    std::vector<std::size_t> top;     // first top_k of `ranked` with positive score
};

SnpRanking snp_ranking(const Model& model, const Cohort& cohort, std::span<const std::size_t> subjects,
                       std::size_t top_k, TargetClass target = TargetClass::SZ);

/// Sums each group of `categories` consecutive values.
std::vector<double> group_sum(std::span<const double> values, std::size_t categories);

// ---------------------------------------------------------------------------
// Exports

/// "index,score,rank" with 1-based ranks.
void write_scores_csv(const std::filesystem::path& path, std::span<const double> scores);
/// One binary PGM per axial slice (first axis), scaled to 0..255.
void write_pgm_slices(const std::filesystem::path& dir, const Tensor& volume_map, const std::string& stem);

}  // namespace migt

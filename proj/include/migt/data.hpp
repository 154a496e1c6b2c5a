#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "migt/tensor.hpp"

namespace migt {

// ---------------------------------------------------------------------------
// Connectome vectorization

/// Strictly-below-diagonal entries of a symmetric [n×n] matrix in row-major
/// order (row 1 col 0, row 2 cols 0..1, ...). Length n(n−1)/2.
std::vector<double> lower_triangle(const Tensor& matrix, double symmetry_tol = 1e-9);
/// Inverse of lower_triangle: symmetric [n×n] with a zero diagonal.
Tensor embed_lower_triangle(std::span<const double> values, std::size_t nodes);

std::size_t connection_count(std::size_t nodes);
/// Node pair (row, col), row > col, of connection `index`.
std::pair<std::size_t, std::size_t> connection_nodes(std::size_t index, std::size_t nodes);
std::size_t connection_index(std::size_t row, std::size_t col);
/// Recovers n from n(n−1)/2; throws ConfigError if `count` is not triangular.
std::size_t nodes_for_connections(std::size_t count);

// ---------------------------------------------------------------------------
// Genotypes

/// One group of `categories` indicator values per SNP.
std::vector<double> one_hot_snps(std::span<const int> genotypes, std::size_t categories);

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct CohortSpec {
    std::size_t n_subjects = 64;
    /// Fraction of subjects labelled SZ (1).
    double sz_fraction = 0.5;
    std::size_t n_snps = 32;
    std::size_t snp_categories = 3;
    std::size_t fnc_nodes = 12;
    std::array<std::size_t, 3> volume_extent{16, 16, 16};

    // Label signal planted directly into each modality.
    double genomic_strength = 0.0;
    double connectome_strength = 0.0;
    double volume_strength = 0.0;
    /// XOR-style interaction: genomic causal SNPs carry a random sign a,
    /// causal connections carry a·(2y−1), so neither is informative alone.
    double cross_modal_strength = 0.0;

    std::size_t causal_snps = 3;
    std::size_t causal_connections = 2;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t snp_dim() const { return n_snps * snp_categories; }
    std::size_t fnc_dim() const { return connection_count(fnc_nodes); }
};

nlohmann::json to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const nlohmann::json& j, CohortSpec base = {});

/// Generator-side knowledge of where the label signal lives.
struct GroundTruth {
    std::vector<std::size_t> causal_snps;
    std::vector<std::size_t> causal_connections;
    std::array<double, 3> blob_center{};
    double blob_radius = 0.0;

    /// Voxel mask of the signal blob for `extent`.
    std::vector<bool> blob_mask(std::array<std::size_t, 3> extent) const;
};

struct SubjectRecord {
    std::string id;
    Tensor genomic;     // [d] one-hot groups
    Tensor connectome;  // [f] lower triangle of an FNC matrix
    Tensor volume;      // [D×H×W] density in [0, 1]
    int label = 0;      // 0 = HC, 1 = SZ
};

struct Cohort {
    CohortSpec spec;
    GroundTruth truth;
    std::vector<SubjectRecord> subjects;

    std::vector<int> labels() const;
    std::size_t snp_dim() const { return subjects.empty() ? spec.snp_dim() : subjects.front().genomic.numel(); }
    std::size_t fnc_dim() const { return subjects.empty() ? spec.fnc_dim() : subjects.front().connectome.numel(); }
    std::array<std::size_t, 3> volume_extent() const;
};

/// Deterministic in `spec` (including its seed).
Cohort generate_cohort(const CohortSpec& spec);

/// Directory layout: manifest.json plus <id>/G.mgt, <id>/C.mgt, <id>/S.mgt.
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort read_cohort(const std::filesystem::path& dir);

}  // namespace migt

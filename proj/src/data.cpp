#include "migt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "migt/errors.hpp"
#include "json_fields.hpp"
#include "migt/mgt_io.hpp"
#include "migt/rng.hpp"

namespace migt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------

std::size_t connection_count(std::size_t nodes) { return nodes * (nodes - (nodes > 0 ? 1 : 0)) / 2; }

std::vector<double> lower_triangle(const Tensor& matrix, double symmetry_tol) {
    if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1)) {
        throw DimensionError("lower_triangle: expected a square matrix, got " + shape_string(matrix.shape()));
    }
    const std::size_t n = matrix.dim(0);
    auto m = matrix.data();
    std::vector<double> out;
    out.reserve(connection_count(n));
    for (std::size_t r = 1; r < n; ++r) {
        for (std::size_t c = 0; c < r; ++c) {
            const double lo = m[r * n + c], hi = m[c * n + r];
            if (std::abs(lo - hi) > symmetry_tol) {
                throw ParameterError("lower_triangle: matrix is not symmetric at (" + std::to_string(r) + ", " +
                                     std::to_string(c) + "): " + std::to_string(lo) + " vs " + std::to_string(hi));
            }
            out.push_back(lo);
        }
    }
    return out;
}

Tensor embed_lower_triangle(std::span<const double> values, std::size_t nodes) {
    if (values.size() != connection_count(nodes)) {
        throw DimensionError("embed_lower_triangle: " + std::to_string(values.size()) + " values for " +
                             std::to_string(nodes) + " nodes");
    }
    std::vector<double> m(nodes * nodes, 0.0);
    std::size_t j = 0;
    for (std::size_t r = 1; r < nodes; ++r)
        for (std::size_t c = 0; c < r; ++c, ++j) m[r * nodes + c] = m[c * nodes + r] = values[j];
    return Tensor({nodes, nodes}, std::move(m));
}

std::size_t connection_index(std::size_t row, std::size_t col) {
    if (row <= col) throw ParameterError("connection_index: row must exceed col");
    return row * (row - 1) / 2 + col;
}

std::pair<std::size_t, std::size_t> connection_nodes(std::size_t index, std::size_t nodes) {
    if (index >= connection_count(nodes)) {
        throw DimensionError("connection " + std::to_string(index) + " out of range for " + std::to_string(nodes) +
                             " nodes");
    }
    auto row = static_cast<std::size_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(index))) / 2.0);
    while (row * (row - 1) / 2 > index) --row;
    while ((row + 1) * row / 2 <= index) ++row;
    return {row, index - row * (row - 1) / 2};
}

std::size_t nodes_for_connections(std::size_t count) {
    auto n = static_cast<std::size_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(count))) / 2.0);
    for (std::size_t cand = n > 0 ? n - 1 : 0; cand <= n + 1; ++cand) {
        if (cand >= 2 && connection_count(cand) == count) return cand;
    }
    throw ConfigError(std::to_string(count) + " is not n(n-1)/2 for any node count n");
}

std::vector<double> one_hot_snps(std::span<const int> genotypes, std::size_t categories) {
    if (categories == 0) throw ParameterError("one_hot_snps: categories must be positive");
    std::vector<double> out(genotypes.size() * categories, 0.0);
    for (std::size_t i = 0; i < genotypes.size(); ++i) {
        const int g = genotypes[i];
        if (g < 0 || static_cast<std::size_t>(g) >= categories) {
            throw ParameterError("one_hot_snps: genotype " + std::to_string(g) + " at SNP " + std::to_string(i) +
                                 " is outside [0, " + std::to_string(categories) + ")");
        }
        out[i * categories + static_cast<std::size_t>(g)] = 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------

void CohortSpec::validate() const {
    if (n_subjects == 0) throw ConfigError("cohort spec: n_subjects must be positive");
    if (!(sz_fraction >= 0.0 && sz_fraction <= 1.0)) throw ConfigError("cohort spec: sz_fraction must lie in [0, 1]");
    if (n_snps == 0) throw ConfigError("cohort spec: n_snps must be positive");
    if (snp_categories == 0) throw ConfigError("cohort spec: snp_categories must be positive");
    if (fnc_nodes < 2) throw ConfigError("cohort spec: fnc_nodes must be at least 2");
    for (auto e : volume_extent)
        if (e == 0) throw ConfigError("cohort spec: volume_extent entries must be positive");
    for (double s : {genomic_strength, connectome_strength, volume_strength, cross_modal_strength}) {
        if (!(s >= 0.0)) throw ConfigError("cohort spec: signal strengths must be non-negative");
    }
    if (causal_snps > n_snps) throw ConfigError("cohort spec: causal_snps exceeds n_snps");
    if (causal_connections > fnc_dim()) throw ConfigError("cohort spec: causal_connections exceeds connection count");
}

nlohmann::json to_json(const CohortSpec& s) {
    return {
        {"n_subjects", s.n_subjects},
        {"sz_fraction", s.sz_fraction},
        {"n_snps", s.n_snps},
        {"snp_categories", s.snp_categories},
        {"fnc_nodes", s.fnc_nodes},
        {"volume_extent", s.volume_extent},
        {"genomic_strength", s.genomic_strength},
        {"connectome_strength", s.connectome_strength},
        {"volume_strength", s.volume_strength},
        {"cross_modal_strength", s.cross_modal_strength},
        {"causal_snps", s.causal_snps},
        {"causal_connections", s.causal_connections},
        {"seed", s.seed},
    };
}

CohortSpec cohort_spec_from_json(const nlohmann::json& j, CohortSpec s) {
    try {
        auto read = [&](const char* key, auto& field) { detail::read_field(j, "cohort spec: ", key, field); };
        read("n_subjects", s.n_subjects);
        read("sz_fraction", s.sz_fraction);
        read("n_snps", s.n_snps);
        read("snp_categories", s.snp_categories);
        read("fnc_nodes", s.fnc_nodes);
        read("volume_extent", s.volume_extent);
        read("genomic_strength", s.genomic_strength);
        read("connectome_strength", s.connectome_strength);
        read("volume_strength", s.volume_strength);
        read("cross_modal_strength", s.cross_modal_strength);
        read("causal_snps", s.causal_snps);
        read("causal_connections", s.causal_connections);
        read("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cohort spec: ") + e.what());
    }
    return s;
}

std::vector<bool> GroundTruth::blob_mask(std::array<std::size_t, 3> extent) const {
    std::vector<bool> mask(extent[0] * extent[1] * extent[2]);
    std::size_t i = 0;
    for (std::size_t z = 0; z < extent[0]; ++z)
        for (std::size_t y = 0; y < extent[1]; ++y)
            for (std::size_t x = 0; x < extent[2]; ++x, ++i) {
                const double dz = static_cast<double>(z) - blob_center[0];
                const double dy = static_cast<double>(y) - blob_center[1];
                const double dx = static_cast<double>(x) - blob_center[2];
                mask[i] = dz * dz + dy * dy + dx * dx <= blob_radius * blob_radius;
            }
    return mask;
}

std::vector<int> Cohort::labels() const {
    std::vector<int> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) out.push_back(s.label);
    return out;
}

std::array<std::size_t, 3> Cohort::volume_extent() const {
    if (subjects.empty()) return spec.volume_extent;
    const auto& sh = subjects.front().volume.shape();
    return {sh[0], sh[1], sh[2]};
}

namespace {

// Logit shift per unit of genomic liability on a causal SNP's allele frequency.
constexpr double kSnpEffect = 2.0;
// Connection value per unit of connectome liability, and its residual noise.
constexpr double kConnectionEffect = 0.4;
constexpr double kConnectionNoise = 0.2;
// Signal-blob amplitude model: base + effect · liability + noise.
constexpr double kBlobBase = 0.5;
constexpr double kBlobEffect = 0.25;
constexpr double kBlobNoise = 0.05;
constexpr std::size_t kFactorRank = 3;
constexpr std::size_t kBackgroundBlobs = 4;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::size_t> choose_distinct(std::size_t count, std::size_t universe, Rng& rng) {
    std::vector<std::size_t> all(universe);
    for (std::size_t i = 0; i < universe; ++i) all[i] = i;
    rng.shuffle(all);
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

void add_gaussian_blob(std::vector<double>& volume, std::array<std::size_t, 3> extent, std::array<double, 3> center,
                       double sigma, double amplitude) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    std::size_t i = 0;
    for (std::size_t z = 0; z < extent[0]; ++z)
        for (std::size_t y = 0; y < extent[1]; ++y)
            for (std::size_t x = 0; x < extent[2]; ++x, ++i) {
                const double dz = static_cast<double>(z) - center[0];
                const double dy = static_cast<double>(y) - center[1];
                const double dx = static_cast<double>(x) - center[2];
                volume[i] += amplitude * std::exp(-(dz * dz + dy * dy + dx * dx) * inv);
            }
}

std::vector<double> synthetic_fnc(std::size_t nodes, Rng& rng) {
    // Random low-rank factor model plus unique variance, normalized to a
    // correlation matrix.
    std::vector<double> loadings(nodes * kFactorRank);
    for (auto& v : loadings) v = rng.normal();
    std::vector<double> cov(nodes * nodes, 0.0);
    for (std::size_t r = 0; r < nodes; ++r)
        for (std::size_t c = 0; c < nodes; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kFactorRank; ++k) acc += loadings[r * kFactorRank + k] * loadings[c * kFactorRank + k];
            cov[r * nodes + c] = acc;
        }
    for (std::size_t r = 0; r < nodes; ++r) cov[r * nodes + r] += static_cast<double>(kFactorRank) * rng.uniform(0.5, 1.5);
    std::vector<double> corr(nodes * nodes);
    for (std::size_t r = 0; r < nodes; ++r)
        for (std::size_t c = 0; c < nodes; ++c)
            corr[r * nodes + c] =
                std::clamp(cov[r * nodes + c] / std::sqrt(cov[r * nodes + r] * cov[c * nodes + c]), -1.0, 1.0);
    return corr;
}

}  // namespace

Cohort generate_cohort(const CohortSpec& spec) {
    spec.validate();
    Cohort cohort;
    cohort.spec = spec;
    Rng rng(derive_seed(spec.seed, 0xC0407));

    const std::size_t n = spec.n_subjects;
    const auto n_sz = static_cast<std::size_t>(std::llround(spec.sz_fraction * static_cast<double>(n)));
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_sz), 1);
    rng.shuffle(labels);

    auto& truth = cohort.truth;
    truth.causal_snps = choose_distinct(spec.causal_snps, spec.n_snps, rng);
    truth.causal_connections = choose_distinct(spec.causal_connections, spec.fnc_dim(), rng);
    const auto& ext = spec.volume_extent;
    const auto octant = rng.below(8);
    for (std::size_t a = 0; a < 3; ++a) {
        const double half = static_cast<double>(ext[a]) / 2.0;
        truth.blob_center[a] = ((octant >> a) & 1 ? half : 0.0) + half / 2.0 - 0.5;
    }
    const double min_extent = static_cast<double>(*std::min_element(ext.begin(), ext.end()));
    const double blob_sigma = std::max(0.75, min_extent / 10.0);
    truth.blob_radius = 2.0 * blob_sigma;

    std::vector<double> allele_freq(spec.n_snps);
    for (auto& q : allele_freq) q = rng.uniform(0.1, 0.5);
    std::vector<bool> causal_snp(spec.n_snps, false);
    for (auto j : truth.causal_snps) causal_snp[j] = true;

    const std::size_t voxels = ext[0] * ext[1] * ext[2];
    const int max_dosage = static_cast<int>(spec.snp_categories) - 1;

    cohort.subjects.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        const double sign = y == 1 ? 1.0 : -1.0;
        const double a = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double b = a * sign;
        const double z_g = spec.genomic_strength * sign + spec.cross_modal_strength * a;
        const double z_c = spec.connectome_strength * sign + spec.cross_modal_strength * b;
        const double z_s = spec.volume_strength * sign;

        std::vector<int> genotypes(spec.n_snps);
        for (std::size_t j = 0; j < spec.n_snps; ++j) {
            double p = allele_freq[j];
            if (causal_snp[j]) p = logistic(std::log(p / (1.0 - p)) + kSnpEffect * z_g);
            int dosage = 0;
            for (int t = 0; t < max_dosage; ++t) dosage += rng.uniform() < p ? 1 : 0;
            genotypes[j] = dosage;
        }

        auto fnc = synthetic_fnc(spec.fnc_nodes, rng);
        for (auto j : truth.causal_connections) {
            const auto [r, c] = connection_nodes(j, spec.fnc_nodes);
            const double v = std::clamp(kConnectionEffect * z_c + kConnectionNoise * rng.normal(), -1.0, 1.0);
            fnc[r * spec.fnc_nodes + c] = fnc[c * spec.fnc_nodes + r] = v;
        }

        std::vector<double> vol(voxels, 0.0);
        for (std::size_t k = 0; k < kBackgroundBlobs; ++k) {
            std::array<double, 3> center{};
            for (std::size_t ax = 0; ax < 3; ++ax) center[ax] = rng.uniform(0.0, static_cast<double>(ext[ax] - 1));
            add_gaussian_blob(vol, ext, center, min_extent / 6.0, rng.uniform(0.1, 0.3));
        }
        const double amplitude = std::max(0.0, kBlobBase + kBlobEffect * z_s + kBlobNoise * rng.normal());
        add_gaussian_blob(vol, ext, truth.blob_center, blob_sigma, amplitude);
        for (auto& v : vol) v = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);

        char id[32];
        std::snprintf(id, sizeof id, "sub-%04zu", i + 1);
        SubjectRecord rec;
        rec.id = id;
        rec.label = y;
        rec.genomic = Tensor({spec.snp_dim()}, one_hot_snps(genotypes, spec.snp_categories));
        rec.connectome = Tensor({spec.fnc_dim()}, lower_triangle(Tensor({spec.fnc_nodes, spec.fnc_nodes}, fnc)));
        rec.volume = Tensor({ext[0], ext[1], ext[2]}, std::move(vol));
        cohort.subjects.push_back(std::move(rec));
    }
    return cohort;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json truth_to_json(const GroundTruth& t) {
    return {{"causal_snps", t.causal_snps},
            {"causal_connections", t.causal_connections},
            {"blob_center", t.blob_center},
            {"blob_radius", t.blob_radius}};
}

GroundTruth truth_from_json(const nlohmann::json& j) {
    GroundTruth t;
    j.at("causal_snps").get_to(t.causal_snps);
    j.at("causal_connections").get_to(t.causal_connections);
    j.at("blob_center").get_to(t.blob_center);
    j.at("blob_radius").get_to(t.blob_radius);
    return t;
}

constexpr int kCohortFormatVersion = 1;

}  // namespace

void write_cohort(const Cohort& cohort, const fs::path& dir) {
    if (cohort.subjects.empty()) throw ConfigError("refusing to write an empty cohort");
    fs::create_directories(dir);
    const auto& first = cohort.subjects.front();
    nlohmann::json manifest;
    manifest["format"] = "migt-cohort";
    manifest["format_version"] = kCohortFormatVersion;
    manifest["spec"] = to_json(cohort.spec);
    manifest["truth"] = truth_to_json(cohort.truth);
    manifest["snp_categories"] = cohort.spec.snp_categories;
    manifest["shapes"] = {{"G", first.genomic.shape()}, {"C", first.connectome.shape()}, {"S", first.volume.shape()}};
    manifest["subjects"] = nlohmann::json::array();
    for (const auto& s : cohort.subjects) {
        const fs::path sub = dir / s.id;
        fs::create_directories(sub);
        write_mgt(sub / "G.mgt", s.genomic);
        write_mgt(sub / "C.mgt", s.connectome);
        write_mgt(sub / "S.mgt", s.volume);
        manifest["subjects"].push_back({{"id", s.id}, {"label", s.label}});
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

Cohort read_cohort(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no cohort manifest at " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "migt-cohort") throw FormatError(dir.string() + " is not a cohort directory");
    if (manifest.value("format_version", 0) != kCohortFormatVersion) {
        throw FormatError(dir.string() + ": unsupported cohort format version");
    }
    Cohort cohort;
    try {
        cohort.spec = cohort_spec_from_json(manifest.at("spec"));
        cohort.truth = truth_from_json(manifest.at("truth"));
        const auto shape_g = manifest.at("shapes").at("G").get<Shape>();
        const auto shape_c = manifest.at("shapes").at("C").get<Shape>();
        const auto shape_s = manifest.at("shapes").at("S").get<Shape>();
        for (const auto& entry : manifest.at("subjects")) {
            SubjectRecord rec;
            rec.id = entry.at("id").get<std::string>();
            rec.label = entry.at("label").get<int>();
            if (rec.label != 0 && rec.label != 1) throw FormatError("subject " + rec.id + ": label must be 0 or 1");
            const fs::path sub = dir / rec.id;
            rec.genomic = read_mgt(sub / "G.mgt");
            rec.connectome = read_mgt(sub / "C.mgt");
            rec.volume = read_mgt(sub / "S.mgt");
            auto check = [&](const Tensor& t, const Shape& expected, const char* name) {
                if (t.shape() != expected) {
                    throw FormatError("subject " + rec.id + ": " + name + " has shape " + shape_string(t.shape()) +
                                      ", manifest says " + shape_string(expected));
                }
            };
            check(rec.genomic, shape_g, "G");
            check(rec.connectome, shape_c, "C");
            check(rec.volume, shape_s, "S");
            cohort.subjects.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (cohort.subjects.empty()) throw FormatError(dir.string() + ": cohort has no subjects");
    return cohort;
}

}  // namespace migt

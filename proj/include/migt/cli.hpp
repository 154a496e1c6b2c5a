#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "migt/data.hpp"
#include "migt/interpret.hpp"
#include "migt/model.hpp"
#include "migt/training.hpp"

namespace migt::cli {

struct InterpretOptions {
    std::string checkpoint;
    std::size_t top_snps = 0;
    std::size_t top_connections = 0;
    bool volume_maps = false;
    /// "test" (the checkpoint's held-out fold) or "all".
    std::string subjects = "test";
    TargetClass target = TargetClass::SZ;
    /// Cap on the number of subjects that get a volume map; 0 means no cap.
    std::size_t max_maps = 0;
};

/// Everything a run needs. Built from defaults, then a JSON config file,
/// then command-line flags, each layer overriding the previous one.
struct RunConfig {
    CohortSpec cohort;
    std::string cohort_path;
    ModelConfig model;
    TrainConfig train;
    std::uint64_t seed = 0;
    std::string out;
    /// train: checkpoint whose architecture and values start every fold.
    std::string init;
    /// ablate: subset of row labels; empty means the full grid.
    std::vector<std::string> rows;
    InterpretOptions interpret;

    // Input widths named explicitly by the config file. Anything not named is
    // taken from the cohort.
    bool explicit_snp_dim = false;
    bool explicit_fnc_dim = false;
    bool explicit_volume_extent = false;
};

nlohmann::json to_json(const RunConfig& config, const std::string& command);
/// Applies a config-file document on top of `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Sets the model's unset input widths from the cohort. Volumes are rounded
/// up to the next multiple of 8 so three pooling stages divide them.
void fit_inputs_to_cohort(RunConfig& config, const Cohort& cohort);

struct AblationRow {
    std::string label;  // "G", "GC-aff", "GCS-trans", ...
    ModalitySet modalities;
    Fusion fusion;
};

/// G, C, S, then GC and GCS under concat, aff and trans.
std::vector<AblationRow> ablation_grid();

/// Entry point of the `migt` tool. Returns the process exit status: 0 when
/// every requested artifact was written, 1 on a run error, 2 on bad usage.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace migt::cli

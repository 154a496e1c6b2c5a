#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "migt/encoders.hpp"
#include "migt/fusion.hpp"

namespace migt {

enum class Fusion { None, Concat, Aff, Trans };

std::string to_string(Fusion fusion);
Fusion fusion_from_string(const std::string& name);

struct ModalitySet {
    bool genomic = true;
    bool connectome = true;
    bool volume = true;

    std::size_t count() const { return genomic + connectome + volume; }
    /// "G,C,S"-style listing.
    std::string to_string() const;
    static ModalitySet parse(const std::string& spec);
    bool operator==(const ModalitySet&) const = default;
};

struct DropoutRates {
    double p1 = 0.5;
    double p2 = 0.3;
    double p3 = 0.3;
    double head = 0.3;
};

/// Architecture hyperparameters. Defaults are desk scale; see full_scale().
struct ModelConfig {
    ModalitySet modalities;
    Fusion fusion = Fusion::Trans;

    std::size_t snp_dim = 96;
    std::size_t fnc_dim = 66;
    std::array<std::size_t, 3> volume_extent{16, 16, 16};

    std::size_t genomic_hidden1 = 128;
    std::size_t genomic_hidden2 = 96;
    std::size_t connectome_hidden = 96;
    std::size_t embed_dim = 64;
    std::array<std::size_t, 3> volume_channels{4, 8, 16};
    std::size_t kernel_size = 3;
    std::size_t lstm_steps = 2;
    std::size_t heads = 2;
    std::size_t tokens = 4;
    std::size_t head_hidden1 = 64;
    std::size_t head_hidden2 = 32;
    double norm_eps = 1e-5;

    /// Widths printed for the full-size model (2048/1536 genomic, 1536
    /// connectome, 512/256 head, 1378 connections, 121×145×121 volume is
    /// rounded up to multiples of 8).
    static ModelConfig full_scale();

    /// Throws ConfigError on inconsistent modality/fusion choices or widths.
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Inputs for one mini-batch. Tensors for unused modalities may be undefined.
struct Batch {
    Tensor genomic;     // [B×d]
    Tensor connectome;  // [B×f]
    Tensor volume;      // [B×1×D×H×W]
    std::vector<double> labels;

    std::size_t size() const { return labels.size(); }
};

/// Intermediates retained when ForwardContext::explain is set.
struct Explanation {
    Tensor genomic_embedding;
    Tensor connectome_embedding;
    Tensor ssa_output;  // X̄
    Tensor squeezed;    // X̂
    Tensor gc_fused;    // GC′
    Tensor fused;       // input to the head
    std::vector<Tensor> gc_attention;
    std::vector<Tensor> gcs_attention;
};

struct ModelOutput {
    Tensor logit;
    Tensor prob;
    Explanation explain;
};

class Model {
   public:
    Model(ModelConfig config, DropoutRates dropout, std::uint64_t seed, bool trainable = true);

    ModelOutput forward(const Batch& batch, const ForwardContext& ctx) const;

    const ModelConfig& config() const { return config_; }
    const DropoutRates& dropout() const { return dropout_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Copy of this model whose parameters do not track gradients.
    Model frozen_copy() const;

   private:
    ModelConfig config_;
    DropoutRates dropout_;
    ParamStore params_;

    std::optional<GenomicEncoder> genomic_;
    std::optional<ConnectomeEncoder> connectome_;
    std::optional<VolumeEncoder> volume_;
    std::optional<SsaParams> ssa_;
    std::optional<SqueezeParams> squeeze_;
    std::optional<TransFusorParams> genomic_self_, connectome_self_;
    std::optional<TransFusorParams> gc_, gcs_;
    std::optional<AffParams> aff_first_, aff_second_;
    std::optional<HeadParams> head_;
};

}  // namespace migt

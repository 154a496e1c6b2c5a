#include "migt/model.hpp"

#include <sstream>

#include "migt/errors.hpp"
#include "json_fields.hpp"

namespace migt {

std::string to_string(Fusion fusion) {
    switch (fusion) {
        case Fusion::None:
            return "none";
        case Fusion::Concat:
            return "concat";
        case Fusion::Aff:
            return "aff";
        case Fusion::Trans:
            return "trans";
    }
    return "?";
}

Fusion fusion_from_string(const std::string& name) {
    if (name == "none") return Fusion::None;
    if (name == "concat") return Fusion::Concat;
    if (name == "aff") return Fusion::Aff;
    if (name == "trans") return Fusion::Trans;
    throw ConfigError("unknown fusion '" + name + "' (expected none, concat, aff or trans)");
}

std::string ModalitySet::to_string() const {
    std::string out;
    auto append = [&](bool on, const char* tag) {
        if (!on) return;
        if (!out.empty()) out += ',';
        out += tag;
    };
    append(genomic, "G");
    append(connectome, "C");
    append(volume, "S");
    return out;
}

ModalitySet ModalitySet::parse(const std::string& spec) {
    ModalitySet set{false, false, false};
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "G")
            set.genomic = true;
        else if (item == "C")
            set.connectome = true;
        else if (item == "S")
            set.volume = true;
        else if (!item.empty())
            throw ConfigError("unknown modality '" + item + "' (expected G, C or S)");
    }
    if (set.count() == 0) throw ConfigError("modality set '" + spec + "' is empty");
    return set;
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.snp_dim = 4942 * 3;
    c.fnc_dim = 1378;
    c.volume_extent = {128, 152, 128};
    c.genomic_hidden1 = 2048;
    c.genomic_hidden2 = 1536;
    c.connectome_hidden = 1536;
    c.embed_dim = 1536;
    c.head_hidden1 = 512;
    c.head_hidden2 = 256;
    c.heads = 2;
    return c;
}

void ModelConfig::validate() const {
    const std::size_t n = modalities.count();
    if (n == 0) throw ConfigError("at least one modality is required");
    if (fusion == Fusion::None && n != 1) {
        throw ConfigError("fusion 'none' requires exactly one modality, got " + modalities.to_string());
    }
    if (fusion != Fusion::None && n < 2) {
        throw ConfigError("fusion '" + migt::to_string(fusion) + "' requires at least two modalities, got " +
                          modalities.to_string());
    }
    if (fusion == Fusion::Trans && !(modalities.genomic && modalities.connectome)) {
        throw ConfigError("trans fusion runs the genomic-connectome stage first and needs both G and C, got " +
                          modalities.to_string());
    }
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(snp_dim, "snp_dim");
    positive(fnc_dim, "fnc_dim");
    positive(genomic_hidden1, "genomic_hidden1");
    positive(genomic_hidden2, "genomic_hidden2");
    positive(connectome_hidden, "connectome_hidden");
    positive(embed_dim, "embed_dim");
    positive(head_hidden1, "head_hidden1");
    positive(head_hidden2, "head_hidden2");
    positive(lstm_steps, "lstm_steps");
    for (auto c : volume_channels) positive(c, "volume_channels");
    if (kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
    if (heads == 0 || tokens == 0 || embed_dim % tokens != 0 || (embed_dim / tokens) % heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " must split into " + std::to_string(tokens) +
                          " tokens of a width divisible by " + std::to_string(heads) + " heads");
    }
    if (modalities.volume) check_volume_extents(volume_extent);
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"modalities", c.modalities.to_string()},
        {"fusion", to_string(c.fusion)},
        {"snp_dim", c.snp_dim},
        {"fnc_dim", c.fnc_dim},
        {"volume_extent", c.volume_extent},
        {"genomic_hidden1", c.genomic_hidden1},
        {"genomic_hidden2", c.genomic_hidden2},
        {"connectome_hidden", c.connectome_hidden},
        {"embed_dim", c.embed_dim},
        {"volume_channels", c.volume_channels},
        {"kernel_size", c.kernel_size},
        {"lstm_steps", c.lstm_steps},
        {"heads", c.heads},
        {"tokens", c.tokens},
        {"head_hidden1", c.head_hidden1},
        {"head_hidden2", c.head_hidden2},
        {"norm_eps", c.norm_eps},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    try {
        if (j.contains("modalities")) c.modalities = ModalitySet::parse(j.at("modalities").get<std::string>());
        if (j.contains("fusion")) c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
        auto read = [&](const char* key, auto& field) { detail::read_field(j, "model config: ", key, field); };
        read("snp_dim", c.snp_dim);
        read("fnc_dim", c.fnc_dim);
        read("volume_extent", c.volume_extent);
        read("genomic_hidden1", c.genomic_hidden1);
        read("genomic_hidden2", c.genomic_hidden2);
        read("connectome_hidden", c.connectome_hidden);
        read("embed_dim", c.embed_dim);
        read("volume_channels", c.volume_channels);
        read("kernel_size", c.kernel_size);
        read("lstm_steps", c.lstm_steps);
        read("heads", c.heads);
        read("tokens", c.tokens);
        read("head_hidden1", c.head_hidden1);
        read("head_hidden2", c.head_hidden2);
        read("norm_eps", c.norm_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, DropoutRates dropout, std::uint64_t seed, bool trainable)
    : config_(std::move(config)), dropout_(dropout), params_(trainable) {
    config_.validate();
    const auto& c = config_;
    Rng rng(derive_seed(seed, 0x1417));
    std::size_t fused_width = c.embed_dim;

    if (c.modalities.genomic) {
        genomic_ = GenomicEncoder::create(params_, c.snp_dim, c.genomic_hidden1, c.genomic_hidden2, c.embed_dim,
                                          dropout.p1, dropout.p2, c.norm_eps, rng);
    }
    if (c.modalities.connectome) {
        connectome_ =
            ConnectomeEncoder::create(params_, c.fnc_dim, c.connectome_hidden, c.embed_dim, dropout.p3, c.norm_eps, rng);
    }
    if (c.modalities.volume) {
        volume_ = VolumeEncoder::create(params_, c.volume_channels, c.kernel_size, rng);
        ssa_ = SsaParams::create(params_, c.volume_channels[2], volume_feature_extents(c.volume_extent), c.kernel_size,
                                 c.lstm_steps, rng);
        squeeze_ = SqueezeParams::create(params_, c.volume_channels[2], c.embed_dim, rng);
    }

    switch (c.fusion) {
        case Fusion::None:
            if (c.modalities.genomic)
                genomic_self_ = TransFusorParams::create(params_, "gsa", c.embed_dim, c.heads, c.tokens, c.norm_eps, rng);
            if (c.modalities.connectome)
                connectome_self_ =
                    TransFusorParams::create(params_, "csa", c.embed_dim, c.heads, c.tokens, c.norm_eps, rng);
            break;
        case Fusion::Concat:
            fused_width = c.embed_dim * c.modalities.count();
            break;
        case Fusion::Aff:
            aff_first_ = AffParams::create(params_, "aff1", c.embed_dim, rng);
            if (c.modalities.count() == 3) aff_second_ = AffParams::create(params_, "aff2", c.embed_dim, rng);
            break;
        case Fusion::Trans:
            gc_ = TransFusorParams::create(params_, "gc", c.embed_dim, c.heads, c.tokens, c.norm_eps, rng);
            if (c.modalities.volume) {
                gcs_ = TransFusorParams::create(params_, "gcs", c.embed_dim, c.heads, c.tokens, c.norm_eps, rng);
                fused_width = 2 * c.embed_dim;
            }
            break;
    }
    head_ = HeadParams::create(params_, fused_width, c.head_hidden1, c.head_hidden2, dropout.head, c.norm_eps, rng);
}

ModelOutput Model::forward(const Batch& batch, const ForwardContext& ctx) const {
    ModelOutput out;
    Explanation& ex = out.explain;
    std::vector<Tensor> embeddings;  // in G, C, S order

    if (genomic_) {
        if (!batch.genomic.defined()) throw ContractError("model uses the genomic modality but the batch has none");
        ex.genomic_embedding = genomic_forward(batch.genomic, *genomic_, ctx);
        embeddings.push_back(ex.genomic_embedding);
    }
    if (connectome_) {
        if (!batch.connectome.defined()) throw ContractError("model uses the connectome modality but the batch has none");
        ex.connectome_embedding = connectome_forward(batch.connectome, *connectome_, ctx);
        embeddings.push_back(ex.connectome_embedding);
    }
    if (volume_) {
        if (!batch.volume.defined()) throw ContractError("model uses the volume modality but the batch has none");
        ex.ssa_output = ssa_forward(volume_forward(batch.volume, *volume_), *ssa_);
        ex.squeezed = squeeze_volume(ex.ssa_output, *squeeze_);
        embeddings.push_back(ex.squeezed);
    }

    switch (config_.fusion) {
        case Fusion::None: {
            const Tensor& e = embeddings.front();
            if (genomic_self_) {
                auto r = transfusor(e, e, *genomic_self_);
                ex.fused = r.fused;
                ex.gc_attention = std::move(r.attention);
            } else if (connectome_self_) {
                auto r = transfusor(e, e, *connectome_self_);
                ex.fused = r.fused;
                ex.gc_attention = std::move(r.attention);
            } else {
                ex.fused = e;
            }
            break;
        }
        case Fusion::Concat:
            ex.fused = concat_lastdim(embeddings);
            break;
        case Fusion::Aff:
            ex.fused = aff_fuse(embeddings[0], embeddings[1], *aff_first_);
            if (aff_second_) ex.fused = aff_fuse(ex.fused, embeddings[2], *aff_second_);
            break;
        case Fusion::Trans: {
            auto gc = gc_transfusor(ex.genomic_embedding, ex.connectome_embedding, *gc_);
            ex.gc_fused = gc.fused;
            ex.gc_attention = std::move(gc.attention);
            ex.fused = gc.fused;
            if (gcs_) {
                // The head sees the genomic-connectome features next to the
                // three-way fusion, not the three-way fusion alone.
                auto gcs = gcs_transfusor(gc.fused, ex.squeezed, *gcs_);
                ex.gcs_attention = std::move(gcs.attention);
                ex.fused = concat_lastdim({gc.fused, gcs.fused});
            }
            break;
        }
    }

    auto head = classify(ex.fused, *head_, ctx);
    out.logit = head.logit;
    out.prob = head.prob;
    if (!ctx.explain) out.explain = Explanation{};
    return out;
}

Model Model::frozen_copy() const {
    Model copy(config_, dropout_, 0, false);
    copy.params_.copy_values_from(params_);
    return copy;
}

}  // namespace migt

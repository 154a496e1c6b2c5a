#include "migt/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "migt/errors.hpp"
#include "migt/mgt_io.hpp"

namespace migt {

const char* to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::Weight:
            return "weight";
        case ParamKind::Bias:
            return "bias";
        case ParamKind::Norm:
            return "norm";
    }
    return "?";
}

ParamKind param_kind_from_string(const std::string& name) {
    if (name == "weight") return ParamKind::Weight;
    if (name == "bias") return ParamKind::Bias;
    if (name == "norm") return ParamKind::Norm;
    throw FormatError("unknown parameter kind '" + name + "'");
}

Tensor ParamStore::insert(const std::string& key, Tensor value, ParamKind kind) {
    if (contains(key)) throw ConfigError("duplicate parameter key '" + key + "'");
    items_.push_back(Parameter{key, value, kind});
    return value;
}

Tensor ParamStore::add_zeros(const std::string& key, Shape shape, ParamKind kind) {
    return insert(key, Tensor::zeros(std::move(shape), trainable_), kind);
}

Tensor ParamStore::add_constant(const std::string& key, Shape shape, double value, ParamKind kind) {
    return insert(key, Tensor::full(std::move(shape), value, trainable_), kind);
}

Tensor ParamStore::add_glorot(const std::string& key, Shape shape, std::size_t fan_in, std::size_t fan_out,
                              Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = rng.uniform(-limit, limit);
    return insert(key, Tensor(std::move(shape), std::move(values), trainable_), ParamKind::Weight);
}

Tensor ParamStore::add_he(const std::string& key, Shape shape, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = rng.uniform(-limit, limit);
    return insert(key, Tensor(std::move(shape), std::move(values), trainable_), ParamKind::Weight);
}

bool ParamStore::contains(const std::string& key) const {
    return std::any_of(items_.begin(), items_.end(), [&](const Parameter& p) { return p.key == key; });
}

const Tensor& ParamStore::at(const std::string& key) const {
    for (const auto& p : items_)
        if (p.key == key) return p.value;
    throw ConfigError("no parameter named '" + key + "'");
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.numel();
    return n;
}

void ParamStore::zero_grad() const {
    for (const auto& p : items_)
        if (p.value.requires_grad()) p.value.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.size() != size()) {
        throw DimensionError("parameter sets differ in size: " + std::to_string(other.size()) + " vs " +
                             std::to_string(size()));
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& src = other.items_[i];
        auto& dst = items_[i];
        if (src.key != dst.key || src.value.shape() != dst.value.shape()) {
            throw DimensionError("parameter '" + dst.key + "' " + shape_string(dst.value.shape()) +
                                 " cannot take '" + src.key + "' " + shape_string(src.value.shape()));
        }
        std::ranges::copy(src.value.data(), dst.value.mutable_data().begin());
    }
}

Dense Dense::create(ParamStore& store, const std::string& weight_key, const std::string& bias_key, std::size_t in,
                    std::size_t out, Rng& rng) {
    Dense d;
    d.weight = store.add_glorot(weight_key, {in, out}, in, out, rng);
    d.bias = store.add_zeros(bias_key, {out}, ParamKind::Bias);
    return d;
}

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& prefix, std::size_t width, double eps) {
    LayerNormParams ln;
    ln.gain = store.add_constant(prefix + ".gain", {width}, 1.0, ParamKind::Norm);
    ln.bias = store.add_zeros(prefix + ".bias", {width}, ParamKind::Norm);
    ln.eps = eps;
    return ln;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const nlohmann::json& meta) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "migt-checkpoint";
    manifest["format_version"] = 1;
    manifest["meta"] = meta;
    manifest["params"] = nlohmann::json::array();
    for (const auto& p : store.items()) {
        const std::string file = p.key + ".mgt";
        write_mgt(dir / file, p.value);
        manifest["params"].push_back(
            {{"key", p.key}, {"file", file}, {"shape", p.value.shape()}, {"kind", to_string(p.kind)}});
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no checkpoint manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "migt-checkpoint") {
        throw FormatError(dir.string() + " is not a checkpoint directory");
    }
    return manifest;
}

void load_checkpoint_values(const std::filesystem::path& dir, ParamStore& store) {
    const auto manifest = read_checkpoint_manifest(dir);
    const auto& entries = manifest.at("params");
    if (entries.size() != store.size()) {
        throw DimensionError("checkpoint " + dir.string() + " holds " + std::to_string(entries.size()) +
                             " parameters, model expects " + std::to_string(store.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& param = store.items()[i];
        const auto key = entries[i].at("key").get<std::string>();
        if (key != param.key) {
            throw DimensionError("checkpoint parameter #" + std::to_string(i) + " is '" + key + "', model expects '" +
                                 param.key + "'");
        }
        const auto value = read_mgt(dir / entries[i].at("file").get<std::string>());
        if (value.shape() != param.value.shape()) {
            throw DimensionError("checkpoint parameter '" + key + "' has shape " + shape_string(value.shape()) +
                                 ", model expects " + shape_string(param.value.shape()));
        }
        std::ranges::copy(value.data(), param.value.mutable_data().begin());
    }
}

}  // namespace migt

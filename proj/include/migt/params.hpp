#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "migt/ops.hpp"
#include "migt/rng.hpp"
#include "migt/tensor.hpp"

namespace migt {

/// Regularization class of a parameter: dense/conv weights get the L2 weight
/// penalty, biases the L1+L2 bias penalty, normalization gains/offsets none.
enum class ParamKind { Weight, Bias, Norm };

const char* to_string(ParamKind kind);
ParamKind param_kind_from_string(const std::string& name);

struct Parameter {
    std::string key;
    Tensor value;
    ParamKind kind;
};

/// Ordered, key-addressed set of learnable tensors. Insertion order is the
/// canonical iteration order for optimizers and checkpoints.
class ParamStore {
   public:
    explicit ParamStore(bool trainable = true) : trainable_(trainable) {}

    Tensor add_zeros(const std::string& key, Shape shape, ParamKind kind);
    Tensor add_constant(const std::string& key, Shape shape, double value, ParamKind kind);
    /// Uniform Glorot init with limit sqrt(6 / (fan_in + fan_out)).
    Tensor add_glorot(const std::string& key, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
    /// Uniform He init with limit sqrt(6 / fan_in), for layers followed by a
    /// rectifying activation.
    Tensor add_he(const std::string& key, Shape shape, std::size_t fan_in, Rng& rng);

    bool contains(const std::string& key) const;
    const Tensor& at(const std::string& key) const;
    const std::vector<Parameter>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t total_values() const;
    bool trainable() const { return trainable_; }

    void zero_grad() const;
    /// Overwrites every value from `other`; keys and shapes must match exactly.
    void copy_values_from(const ParamStore& other);

   private:
    Tensor insert(const std::string& key, Tensor value, ParamKind kind);

    std::vector<Parameter> items_;
    bool trainable_;
};

struct ForwardContext {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;
    /// Retain attention weights and fusion intermediates for interpretation.
    bool explain = false;
};

struct Dense {
    Tensor weight;
    Tensor bias;

    static Dense create(ParamStore& store, const std::string& weight_key, const std::string& bias_key,
                        std::size_t in, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
    double eps = 1e-5;

    static LayerNormParams create(ParamStore& store, const std::string& prefix, std::size_t width, double eps);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

// Checkpoint directory: manifest.json plus one "<key>.mgt" per parameter.

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const nlohmann::json& meta);
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir);
/// Loads values into a store built with the same layout.
void load_checkpoint_values(const std::filesystem::path& dir, ParamStore& store);

}  // namespace migt

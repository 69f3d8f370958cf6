#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairkd {

enum class Activation { relu };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);

// Dense row-major matrix. Used for batches of logits and feature vectors.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

// Parameters of one affine layer: weights are out x in, row-major.
struct LayerParams {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> biases;

    double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    bool operator==(const LayerParams&) const = default;
};

// Feed-forward network: rectifier on hidden layers, linear output layer.
struct DenseNet {
    std::vector<std::size_t> layer_dims;
    std::vector<LayerParams> layers;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;  // seed the parameters were initialized from

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t parameter_count() const;

    bool operator==(const DenseNet&) const = default;
};

// Gradients with the same layout as the owning network's parameters.
struct GradientBundle {
    std::vector<LayerParams> layers;

    void set_zero();
    bool operator==(const GradientBundle&) const = default;
};

// Post-activation values of every layer for one input; front() is the
// input itself and back() is the logit vector.
struct ForwardTrace {
    std::vector<std::vector<double>> activations;

    std::span<const double> logits() const { return activations.back(); }
};

DenseNet init_network(std::span<const std::size_t> layer_dims, std::uint64_t seed);
DenseNet zero_network(std::span<const std::size_t> layer_dims);
GradientBundle zero_gradients(const DenseNet& net);

std::vector<double> forward(const DenseNet& net, std::span<const double> x);
void forward_trace(const DenseNet& net, std::span<const double> x, ForwardTrace& trace);

// Activations of the last hidden layer (the input itself for a net with
// no hidden layer).
std::vector<double> penultimate(const DenseNet& net, std::span<const double> x);

GradientBundle backward(const DenseNet& net, std::span<const double> x,
                        std::span<const double> dL_dz);

// Adds the parameter gradients for one sample into `grads` using a trace
// previously produced by forward_trace for the same network and input.
void accumulate_backward(const DenseNet& net, const ForwardTrace& trace,
                         std::span<const double> dL_dz, GradientBundle& grads,
                         std::vector<double>& scratch);

DenseNet sgd_step(DenseNet net, const GradientBundle& grads, double lr);
void apply_sgd(DenseNet& net, const GradientBundle& grads, double lr);

// Lowest index wins on ties.
std::size_t argmax(std::span<const double> v);

// Checkpoint: 8-byte magic, u32 LE header length, JSON header (layer dims,
// activation, seed, format version), then every layer's weights followed
// by its biases as little-endian IEEE-754 doubles.
std::string serialize_checkpoint(const DenseNet& net);
DenseNet parse_checkpoint(std::string_view bytes);
void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

}  // namespace fairkd

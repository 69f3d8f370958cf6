#include "fairkd/nn.hpp"

#include "fairkd/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace fairkd {

namespace {

constexpr std::string_view kCheckpointMagic{"FKDNET\x00\x01", 8};
constexpr int kCheckpointVersion = 1;

void check_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2) {
        throw std::invalid_argument("layer_dims needs at least an input and an output dimension");
    }
    for (const auto d : dims) {
        if (d == 0) {
            throw std::invalid_argument("layer_dims entries must be positive");
        }
    }
}

void check_congruent(const DenseNet& net, const GradientBundle& grads) {
    if (grads.layers.size() != net.layers.size()) {
        throw std::invalid_argument("gradient bundle has a different layer count than the network");
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& p = net.layers[l];
        const auto& g = grads.layers[l];
        if (g.in != p.in || g.out != p.out || g.weights.size() != p.weights.size() ||
            g.biases.size() != p.biases.size()) {
            throw std::invalid_argument("gradient bundle shape differs from network at layer " +
                                        std::to_string(l));
        }
    }
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
    }
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    return v;
}

}  // namespace

std::string_view activation_name(Activation act) {
    switch (act) {
        case Activation::relu:
            return "relu";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") {
        return Activation::relu;
    }
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += l.weights.size() + l.biases.size();
    }
    return n;
}

void GradientBundle::set_zero() {
    for (auto& l : layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
}

DenseNet zero_network(std::span<const std::size_t> layer_dims) {
    check_dims(layer_dims);
    DenseNet net;
    net.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        LayerParams p;
        p.in = layer_dims[l];
        p.out = layer_dims[l + 1];
        p.weights.assign(p.in * p.out, 0.0);
        p.biases.assign(p.out, 0.0);
        net.layers.push_back(std::move(p));
    }
    return net;
}

DenseNet init_network(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
    DenseNet net = zero_network(layer_dims);
    net.seed = seed;
    Rng rng(seed);
    for (auto& p : net.layers) {
        // He-uniform weights, bias range 1/sqrt(fan_in).
        const double fan_in = static_cast<double>(p.in);
        const double w_bound = std::sqrt(6.0 / fan_in);
        const double b_bound = 1.0 / std::sqrt(fan_in);
        for (auto& w : p.weights) {
            w = rng.uniform(-w_bound, w_bound);
        }
        for (auto& b : p.biases) {
            b = rng.uniform(-b_bound, b_bound);
        }
    }
    return net;
}

GradientBundle zero_gradients(const DenseNet& net) {
    GradientBundle g;
    g.layers.reserve(net.layers.size());
    for (const auto& p : net.layers) {
        LayerParams z;
        z.in = p.in;
        z.out = p.out;
        z.weights.assign(p.weights.size(), 0.0);
        z.biases.assign(p.biases.size(), 0.0);
        g.layers.push_back(std::move(z));
    }
    return g;
}

void forward_trace(const DenseNet& net, std::span<const double> x, ForwardTrace& trace) {
    if (x.size() != net.input_dim()) {
        throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                    ", network expects " + std::to_string(net.input_dim()));
    }
    trace.activations.resize(net.layers.size() + 1);
    trace.activations[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& p = net.layers[l];
        const auto& a = trace.activations[l];
        auto& z = trace.activations[l + 1];
        z.resize(p.out);
        const bool hidden = l + 1 < net.layers.size();
        for (std::size_t o = 0; o < p.out; ++o) {
            const double* row = p.weights.data() + o * p.in;
            double s = p.biases[o];
            for (std::size_t i = 0; i < p.in; ++i) {
                s += row[i] * a[i];
            }
            z[o] = hidden && s < 0.0 ? 0.0 : s;
        }
    }
}

std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
    ForwardTrace trace;
    forward_trace(net, x, trace);
    return std::move(trace.activations.back());
}

std::vector<double> penultimate(const DenseNet& net, std::span<const double> x) {
    ForwardTrace trace;
    forward_trace(net, x, trace);
    return std::move(trace.activations[trace.activations.size() - 2]);
}

void accumulate_backward(const DenseNet& net, const ForwardTrace& trace,
                         std::span<const double> dL_dz, GradientBundle& grads,
                         std::vector<double>& scratch) {
    if (dL_dz.size() != net.output_dim()) {
        throw std::invalid_argument("backward: logit gradient has length " +
                                    std::to_string(dL_dz.size()) + ", network outputs " +
                                    std::to_string(net.output_dim()));
    }
    if (trace.activations.size() != net.layers.size() + 1) {
        throw std::invalid_argument("backward: trace does not belong to this network");
    }
    std::vector<double> delta(dL_dz.begin(), dL_dz.end());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& p = net.layers[l];
        auto& g = grads.layers[l];
        const auto& a = trace.activations[l];
        for (std::size_t o = 0; o < p.out; ++o) {
            const double d = delta[o];
            g.biases[o] += d;
            double* grow = g.weights.data() + o * p.in;
            for (std::size_t i = 0; i < p.in; ++i) {
                grow[i] += d * a[i];
            }
        }
        if (l == 0) {
            break;
        }
        // Propagate through W^T, then the rectifier (derivative 0 at 0).
        scratch.assign(p.in, 0.0);
        for (std::size_t o = 0; o < p.out; ++o) {
            const double d = delta[o];
            const double* row = p.weights.data() + o * p.in;
            for (std::size_t i = 0; i < p.in; ++i) {
                scratch[i] += row[i] * d;
            }
        }
        for (std::size_t i = 0; i < p.in; ++i) {
            if (!(a[i] > 0.0)) {
                scratch[i] = 0.0;
            }
        }
        delta.swap(scratch);
    }
}

GradientBundle backward(const DenseNet& net, std::span<const double> x,
                        std::span<const double> dL_dz) {
    if (dL_dz.size() != net.output_dim()) {
        throw std::invalid_argument("backward: logit gradient has length " +
                                    std::to_string(dL_dz.size()) + ", network outputs " +
                                    std::to_string(net.output_dim()));
    }
    ForwardTrace trace;
    forward_trace(net, x, trace);
    GradientBundle grads = zero_gradients(net);
    std::vector<double> scratch;
    accumulate_backward(net, trace, dL_dz, grads, scratch);
    return grads;
}

void apply_sgd(DenseNet& net, const GradientBundle& grads, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("sgd: learning rate must be positive and finite");
    }
    check_congruent(net, grads);
    for (const auto& g : grads.layers) {
        const auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(g.weights.begin(), g.weights.end(), finite) ||
            !std::all_of(g.biases.begin(), g.biases.end(), finite)) {
            throw std::invalid_argument("sgd: gradient contains non-finite entries");
        }
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& p = net.layers[l];
        const auto& g = grads.layers[l];
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
            p.weights[i] -= lr * g.weights[i];
        }
        for (std::size_t i = 0; i < p.biases.size(); ++i) {
            p.biases[i] -= lr * g.biases[i];
        }
    }
}

DenseNet sgd_step(DenseNet net, const GradientBundle& grads, double lr) {
    apply_sgd(net, grads, lr);
    return net;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

std::string serialize_checkpoint(const DenseNet& net) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["layer_dims"] = net.layer_dims;
    header["activation"] = activation_name(net.activation);
    header["seed"] = net.seed;
    header["dtype"] = "f64le";
    const std::string text = header.dump();

    std::string out(kCheckpointMagic);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const auto& p : net.layers) {
        for (const double w : p.weights) {
            put_f64(out, w);
        }
        for (const double b : p.biases) {
            put_f64(out, b);
        }
    }
    return out;
}

DenseNet parse_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointMagic.size() + 4 ||
        bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    std::size_t pos = kCheckpointMagic.size();
    const auto header_len = static_cast<std::size_t>(get_le(bytes, pos, 4));
    pos += 4;
    if (bytes.size() < pos + header_len) {
        throw std::runtime_error("checkpoint: truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: malformed header: ") + e.what());
    }
    pos += header_len;
    if (header.value("format_version", 0) != kCheckpointVersion ||
        header.value("dtype", std::string{}) != "f64le") {
        throw std::runtime_error("checkpoint: unsupported format");
    }
    const auto dims = header.at("layer_dims").get<std::vector<std::size_t>>();
    DenseNet net = zero_network(dims);
    net.activation = parse_activation(header.at("activation").get<std::string>());
    net.seed = header.at("seed").get<std::uint64_t>();
    if (bytes.size() != pos + 8 * net.parameter_count()) {
        throw std::runtime_error("checkpoint: parameter payload size does not match layer_dims");
    }
    const auto read = [&](double& v) {
        v = std::bit_cast<double>(get_le(bytes, pos, 8));
        pos += 8;
        if (!std::isfinite(v)) {
            throw std::runtime_error("checkpoint: non-finite parameter");
        }
    };
    for (auto& p : net.layers) {
        for (auto& w : p.weights) {
            read(w);
        }
        for (auto& b : p.biases) {
            read(b);
        }
    }
    return net;
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    const std::string bytes = serialize_checkpoint(net);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

DenseNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_checkpoint(buf.str());
}

}  // namespace fairkd

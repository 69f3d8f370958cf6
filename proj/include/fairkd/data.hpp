#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fairkd {

struct LabeledExample {
    std::vector<double> x;
    std::size_t y = 0;  // class id in [0, num_classes)
    int k = 0;          // sensitive group, 0 or 1

    bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<LabeledExample> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    std::size_t count_group(int k) const;

    // Throws std::invalid_argument naming the first offending sample.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

// Seeded generator for a classification task where group 1 is harder:
// class means sit on a scaled simplex in the first num_classes feature
// dimensions, group-1 means are displaced toward the next class's mean by
// bias_strength * group_shift of the inter-mean vector, and group-1 noise
// on the penalized half of the classes is inflated by
// (1 + bias_strength * noise_penalty).
// With bias_strength = 0 both groups share one distribution.
struct SynthConfig {
    std::size_t n = 4000;
    std::size_t d = 16;
    std::size_t num_classes = 6;
    double bias_strength = 0.8;
    double group_balance = 0.5;  // probability of group 1
    double noise_scale = 1.0;
    double class_separation = 3.0;
    double group_shift = 0.7;
    double noise_penalty = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

// Per (class, group) cell of m samples, round(m * test_fraction) go to the
// test side (halves round up). Both outputs keep the input order.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

Dataset filter_group(const Dataset& data, int k);

struct TabularSchema {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
};

// Delimiter-separated text: header `f0,...,f{d-1},label,group`, one example
// per LF-terminated row. Features are written in shortest round-trip form.
void write_tabular(const Dataset& data, std::ostream& out);
void save_tabular(const Dataset& data, const std::filesystem::path& path);
Dataset parse_tabular(std::istream& in, const TabularSchema& schema);
Dataset load_tabular(const std::filesystem::path& path, const TabularSchema& schema);

}  // namespace fairkd

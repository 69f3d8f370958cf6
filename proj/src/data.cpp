#include "fairkd/data.hpp"

#include "fairkd/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace fairkd {

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

[[noreturn]] void row_error(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
T parse_int_field(std::string_view field, std::size_t line_no, const char* name) {
    field = trim(field);
    T v{};
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        row_error(line_no, std::string("malformed ") + name + " '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

std::size_t Dataset::count_group(int k) const {
    return static_cast<std::size_t>(std::count_if(
        examples.begin(), examples.end(), [k](const LabeledExample& e) { return e.k == k; }));
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        const auto where = " (sample " + std::to_string(i) + ")";
        if (e.x.size() != dim) {
            throw std::invalid_argument("feature vector has wrong dimension" + where);
        }
        if (!std::all_of(e.x.begin(), e.x.end(), [](double v) { return std::isfinite(v); })) {
            throw std::invalid_argument("non-finite feature" + where);
        }
        if (e.y >= num_classes) {
            throw std::invalid_argument("label out of range" + where);
        }
        if (e.k != 0 && e.k != 1) {
            throw std::invalid_argument("group must be 0 or 1" + where);
        }
    }
}

void SynthConfig::validate() const {
    if (n == 0 || d == 0 || num_classes < 2) {
        throw std::invalid_argument("synthetic config: need n >= 1, d >= 1, num_classes >= 2");
    }
    if (d < num_classes) {
        throw std::invalid_argument("synthetic config: d must be at least num_classes");
    }
    if (!(bias_strength >= 0.0 && bias_strength <= 1.0)) {
        throw std::invalid_argument("synthetic config: bias_strength must lie in [0, 1]");
    }
    if (!(group_balance > 0.0 && group_balance < 1.0)) {
        throw std::invalid_argument("synthetic config: group_balance must lie in (0, 1)");
    }
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
        throw std::invalid_argument("synthetic config: noise_scale must be positive");
    }
    if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
        throw std::invalid_argument("synthetic config: class_separation must be positive");
    }
    if (!(group_shift >= 0.0) || !std::isfinite(group_shift)) {
        throw std::invalid_argument("synthetic config: group_shift must be non-negative");
    }
    if (!(noise_penalty >= 0.0) || !std::isfinite(noise_penalty)) {
        throw std::invalid_argument("synthetic config: noise_penalty must be non-negative");
    }
}

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t C = cfg.num_classes;
    const double inv_c = 1.0 / static_cast<double>(C);

    // Simplex vertices e_c - (1/C) * 1, scaled.
    std::vector<std::vector<double>> means(C, std::vector<double>(cfg.d, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < C; ++j) {
            means[c][j] = cfg.class_separation * ((j == c ? 1.0 : 0.0) - inv_c);
        }
    }
    std::vector<std::vector<double>> shifted = means;
    const double shift = cfg.bias_strength * cfg.group_shift;
    for (std::size_t c = 0; c < C; ++c) {
        const auto& next = means[(c + 1) % C];
        for (std::size_t j = 0; j < cfg.d; ++j) {
            shifted[c][j] += shift * (next[j] - means[c][j]);
        }
    }
    const std::size_t penalized = (C + 1) / 2;

    Dataset data;
    data.dim = cfg.d;
    data.num_classes = C;
    data.examples.reserve(cfg.n);
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        LabeledExample e;
        e.y = static_cast<std::size_t>(rng.below(C));
        e.k = rng.uniform() < cfg.group_balance ? 1 : 0;
        const auto& mean = e.k == 1 ? shifted[e.y] : means[e.y];
        double sigma = cfg.noise_scale;
        if (e.k == 1 && e.y < penalized) {
            sigma *= 1.0 + cfg.bias_strength * cfg.noise_penalty;
        }
        e.x.resize(cfg.d);
        for (std::size_t j = 0; j < cfg.d; ++j) {
            e.x[j] = mean[j] + sigma * rng.normal();
        }
        data.examples.push_back(std::move(e));
    }
    return data;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: test_fraction must lie in (0, 1)");
    }
    data.validate();
    const std::size_t C = data.num_classes;
    std::vector<std::vector<std::size_t>> cells(2 * C);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& e = data.examples[i];
        cells[e.y * 2 + static_cast<std::size_t>(e.k)].push_back(i);
    }
    std::vector<bool> in_test(data.size(), false);
    Rng rng(seed);
    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
        auto& idx = cells[cell];
        if (idx.empty()) {
            throw std::invalid_argument("stratified_split: empty cell (class " +
                                        std::to_string(cell / 2) + ", group " +
                                        std::to_string(cell % 2) + ")");
        }
        rng.shuffle(std::span<std::size_t>(idx));
        const auto take = static_cast<std::size_t>(
            std::floor(static_cast<double>(idx.size()) * test_fraction + 0.5));
        for (std::size_t t = 0; t < take; ++t) {
            in_test[idx[t]] = true;
        }
    }
    Dataset train{data.dim, data.num_classes, {}};
    Dataset test{data.dim, data.num_classes, {}};
    for (std::size_t i = 0; i < data.size(); ++i) {
        (in_test[i] ? test : train).examples.push_back(data.examples[i]);
    }
    return {std::move(train), std::move(test)};
}

Dataset filter_group(const Dataset& data, int k) {
    Dataset out{data.dim, data.num_classes, {}};
    for (const auto& e : data.examples) {
        if (e.k == k) {
            out.examples.push_back(e);
        }
    }
    return out;
}

void write_tabular(const Dataset& data, std::ostream& out) {
    for (std::size_t j = 0; j < data.dim; ++j) {
        out << 'f' << j << ',';
    }
    out << "label,group\n";
    for (const auto& e : data.examples) {
        for (const double v : e.x) {
            out << format_double(v) << ',';
        }
        out << e.y << ',' << e.k << '\n';
    }
}

void save_tabular(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    write_tabular(data, out);
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

Dataset parse_tabular(std::istream& in, const TabularSchema& schema) {
    Dataset data{schema.feature_dim, schema.num_classes, {}};
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("line 1: missing header");
    }
    const auto header = split_fields(trim(line));
    if (header.size() != schema.feature_dim + 2) {
        throw std::runtime_error("line 1: header has " + std::to_string(header.size()) +
                                 " columns, schema expects " +
                                 std::to_string(schema.feature_dim + 2));
    }
    for (std::size_t j = 0; j < schema.feature_dim; ++j) {
        if (trim(header[j]) != "f" + std::to_string(j)) {
            throw std::runtime_error("line 1: expected column 'f" + std::to_string(j) + "', got '" +
                                     std::string(header[j]) + "'");
        }
    }
    if (trim(header[schema.feature_dim]) != "label" ||
        trim(header[schema.feature_dim + 1]) != "group") {
        throw std::runtime_error("line 1: last two columns must be 'label,group'");
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = trim(line);
        if (row.empty()) {
            continue;
        }
        const auto fields = split_fields(row);
        if (fields.size() != schema.feature_dim + 2) {
            row_error(line_no, "expected " + std::to_string(schema.feature_dim + 2) +
                                   " fields, got " + std::to_string(fields.size()));
        }
        LabeledExample e;
        e.x.resize(schema.feature_dim);
        for (std::size_t j = 0; j < schema.feature_dim; ++j) {
            const auto f = trim(fields[j]);
            const auto res = std::from_chars(f.data(), f.data() + f.size(), e.x[j]);
            if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
                row_error(line_no, "malformed feature f" + std::to_string(j) + " '" +
                                       std::string(f) + "'");
            }
            if (!std::isfinite(e.x[j])) {
                row_error(line_no, "non-finite feature f" + std::to_string(j));
            }
        }
        e.y = parse_int_field<std::size_t>(fields[schema.feature_dim], line_no, "label");
        e.k = parse_int_field<int>(fields[schema.feature_dim + 1], line_no, "group");
        if (e.y >= schema.num_classes) {
            row_error(line_no, "label " + std::to_string(e.y) + " outside [0, " +
                                   std::to_string(schema.num_classes) + ")");
        }
        if (e.k != 0 && e.k != 1) {
            row_error(line_no, "group " + std::to_string(e.k) + " is not 0 or 1");
        }
        data.examples.push_back(std::move(e));
    }
    return data;
}

Dataset load_tabular(const std::filesystem::path& path, const TabularSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open dataset " + path.string());
    }
    try {
        return parse_tabular(in, schema);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace fairkd

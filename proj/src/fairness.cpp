#include "fairkd/fairness.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace fairkd {

namespace {

void check_predictions(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                       std::span<const int> groups, std::size_t num_classes) {
    if (pred.empty()) {
        throw std::invalid_argument("no predictions to evaluate");
    }
    if (pred.size() != truth.size() || pred.size() != groups.size()) {
        throw std::invalid_argument("pred, truth and groups must have equal length");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] >= num_classes || truth[i] >= num_classes) {
            throw std::invalid_argument("class id out of range at sample " + std::to_string(i));
        }
        if (groups[i] != 0 && groups[i] != 1) {
            throw std::invalid_argument("group must be 0 or 1 at sample " + std::to_string(i));
        }
    }
}

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

nlohmann::json row_json(const AccuracyRow& r) {
    return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

}  // namespace

GroupConfusion confusion_from_predictions(std::span<const std::size_t> pred,
                                          std::span<const std::size_t> truth,
                                          std::span<const int> groups, std::size_t num_classes) {
    check_predictions(pred, truth, groups, num_classes);
    GroupConfusion conf(num_classes);
    std::array<std::uint64_t, 2> group_total{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int k = groups[i];
        ++group_total[static_cast<std::size_t>(k)];
        if (pred[i] == truth[i]) {
            ++conf.at(pred[i], k).tp;
        } else {
            ++conf.at(pred[i], k).fp;
            ++conf.at(truth[i], k).fn;
        }
    }
    // Every sample not touching class c is a true negative for c.
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (int k = 0; k < 2; ++k) {
            auto& cell = conf.at(c, k);
            cell.tn = group_total[static_cast<std::size_t>(k)] - cell.tp - cell.fp - cell.fn;
        }
    }
    return conf;
}

RateTable rates(const GroupConfusion& conf) {
    RateTable table;
    table.num_classes = conf.num_classes();
    table.cells.resize(2 * conf.num_classes());
    for (std::size_t c = 0; c < conf.num_classes(); ++c) {
        for (int k = 0; k < 2; ++k) {
            const auto& cell = conf.at(c, k);
            auto& r = table.cells[c * 2 + static_cast<std::size_t>(k)];
            r.tpr = ratio(cell.tp, cell.tp + cell.fn);
            r.tnr = ratio(cell.tn, cell.tn + cell.fp);
            r.fpr = ratio(cell.fp, cell.fp + cell.tn);
            r.tpr_degenerate = cell.tp + cell.fn == 0;
            r.tnr_degenerate = cell.tn + cell.fp == 0;
        }
    }
    return table;
}

double eopp0(const RateTable& r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < r.num_classes; ++c) {
        sum += std::abs(r.at(c, 1).tnr - r.at(c, 0).tnr);
    }
    return sum;
}

double eopp1(const RateTable& r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < r.num_classes; ++c) {
        sum += std::abs(r.at(c, 1).tpr - r.at(c, 0).tpr);
    }
    return sum;
}

double eodd(const RateTable& r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < r.num_classes; ++c) {
        const auto& g0 = r.at(c, 0);
        const auto& g1 = r.at(c, 1);
        sum += std::abs(g1.tpr - g0.tpr + g1.fpr - g0.fpr);
    }
    return sum;
}

double eopp0(const GroupConfusion& conf) { return eopp0(rates(conf)); }
double eopp1(const GroupConfusion& conf) { return eopp1(rates(conf)); }
double eodd(const GroupConfusion& conf) { return eodd(rates(conf)); }

GroupAccuracy group_prf1(const GroupConfusion& conf) {
    GroupAccuracy acc;
    for (int k = 0; k < 2; ++k) {
        AccuracyRow sum;
        std::size_t present = 0;
        for (std::size_t c = 0; c < conf.num_classes(); ++c) {
            const auto& cell = conf.at(c, k);
            if (cell.tp + cell.fn == 0) {
                continue;
            }
            ++present;
            const double p = ratio(cell.tp, cell.tp + cell.fp);
            const double r = ratio(cell.tp, cell.tp + cell.fn);
            sum.precision += p;
            sum.recall += r;
            sum.f1 += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        }
        auto& row = acc.group[static_cast<std::size_t>(k)];
        if (present > 0) {
            const double n = static_cast<double>(present);
            row = {sum.precision / n, sum.recall / n, sum.f1 / n};
        }
    }
    const auto& a = acc.group[0];
    const auto& b = acc.group[1];
    acc.avg = {(a.precision + b.precision) / 2.0, (a.recall + b.recall) / 2.0, (a.f1 + b.f1) / 2.0};
    acc.diff = {std::abs(a.precision - b.precision), std::abs(a.recall - b.recall),
                std::abs(a.f1 - b.f1)};
    return acc;
}

GroupAccuracy group_prf1(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                         std::span<const int> groups, std::size_t num_classes) {
    return group_prf1(confusion_from_predictions(pred, truth, groups, num_classes));
}

FairnessReport evaluate_fairness(std::span<const std::size_t> pred,
                                 std::span<const std::size_t> truth, std::span<const int> groups,
                                 std::size_t num_classes) {
    const auto conf = confusion_from_predictions(pred, truth, groups, num_classes);
    FairnessReport report;
    report.num_classes = num_classes;
    for (const int k : groups) {
        ++report.group_sizes[static_cast<std::size_t>(k)];
    }
    report.accuracy = group_prf1(conf);
    const auto r = rates(conf);
    report.eopp0 = eopp0(r);
    report.eopp1 = eopp1(r);
    report.eodd = eodd(r);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (int k = 0; k < 2; ++k) {
            if (r.at(c, k).tpr_degenerate) {
                report.degenerate.push_back({c, k, "tpr"});
            }
            if (r.at(c, k).tnr_degenerate) {
                report.degenerate.push_back({c, k, "tnr_fpr"});
            }
        }
    }
    return report;
}

std::string report_to_json(const FairnessReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["num_classes"] = report.num_classes;
    j["group_sizes"] = report.group_sizes;
    j["groups"] = nlohmann::json::array();
    for (int k = 0; k < 2; ++k) {
        auto row = row_json(report.accuracy.group[static_cast<std::size_t>(k)]);
        row["group"] = k;
        j["groups"].push_back(row);
    }
    j["avg"] = row_json(report.accuracy.avg);
    j["diff"] = row_json(report.accuracy.diff);
    j["eopp0"] = report.eopp0;
    j["eopp1"] = report.eopp1;
    j["eodd"] = report.eodd;
    j["degenerate_cells"] = nlohmann::json::array();
    for (const auto& d : report.degenerate) {
        j["degenerate_cells"].push_back({{"class", d.cls}, {"group", d.group}, {"rate", d.rate}});
    }
    return j.dump(2) + "\n";
}

std::string report_to_table(const FairnessReport& report) {
    std::ostringstream out;
    out << "bias_group,precision,recall,f_score,eopp0,eopp1,eodd\n";
    const auto emit = [&](const char* name, const AccuracyRow& r) {
        out << name << ',' << fixed4(r.precision) << ',' << fixed4(r.recall) << ','
            << fixed4(r.f1) << ',' << fixed4(report.eopp0) << ',' << fixed4(report.eopp1) << ','
            << fixed4(report.eodd) << '\n';
    };
    emit("group0", report.accuracy.group[0]);
    emit("group1", report.accuracy.group[1]);
    emit("avg", report.accuracy.avg);
    emit("diff", report.accuracy.diff);
    return out.str();
}

void write_prediction_log(const PredictionLog& log, std::ostream& out) {
    out << "pred,truth,group\n";
    for (std::size_t i = 0; i < log.size(); ++i) {
        out << log.pred[i] << ',' << log.truth[i] << ',' << log.groups[i] << '\n';
    }
}

PredictionLog parse_prediction_log(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("prediction log: missing header");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "pred,truth,group") {
        throw std::runtime_error("prediction log: header must be 'pred,truth,group'");
    }
    PredictionLog log;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::array<long long, 3> v{};
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (std::size_t f = 0; f < 3; ++f) {
            const auto res = std::from_chars(p, end, v[f]);
            const bool last = f == 2;
            if (res.ec != std::errc{} || (last ? res.ptr != end : (res.ptr == end || *res.ptr != ','))) {
                throw std::runtime_error("prediction log: malformed row at line " +
                                         std::to_string(line_no));
            }
            p = res.ptr + 1;
        }
        if (v[0] < 0 || v[1] < 0) {
            throw std::runtime_error("prediction log: negative class id at line " +
                                     std::to_string(line_no));
        }
        log.pred.push_back(static_cast<std::size_t>(v[0]));
        log.truth.push_back(static_cast<std::size_t>(v[1]));
        log.groups.push_back(static_cast<int>(v[2]));
    }
    return log;
}

PredictionLog load_prediction_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open prediction log " + path.string());
    }
    return parse_prediction_log(in);
}

PredictionLog predict(const DenseNet& net, const Dataset& data) {
    if (net.input_dim() != data.dim || net.output_dim() != data.num_classes) {
        throw std::invalid_argument("network dims [" + std::to_string(net.input_dim()) + " -> " +
                                    std::to_string(net.output_dim()) +
                                    "] do not match dataset [" + std::to_string(data.dim) +
                                    " -> " + std::to_string(data.num_classes) + "]");
    }
    PredictionLog log;
    log.pred.reserve(data.size());
    ForwardTrace trace;
    for (const auto& e : data.examples) {
        forward_trace(net, e.x, trace);
        log.pred.push_back(argmax(trace.logits()));
        log.truth.push_back(e.y);
        log.groups.push_back(e.k);
    }
    return log;
}

Dataset export_features(const DenseNet& net, const Dataset& data) {
    if (data.empty()) {
        throw std::invalid_argument("export_features: empty dataset");
    }
    if (net.input_dim() != data.dim) {
        throw std::invalid_argument("export_features: network input dim " +
                                    std::to_string(net.input_dim()) + " != dataset dim " +
                                    std::to_string(data.dim));
    }
    Dataset out;
    out.dim = net.layer_dims[net.layer_dims.size() - 2];
    out.num_classes = data.num_classes;
    out.examples.reserve(data.size());
    for (const auto& e : data.examples) {
        out.examples.push_back({penultimate(net, e.x), e.y, e.k});
    }
    return out;
}

}  // namespace fairkd

#pragma once

#include "fairkd/data.hpp"
#include "fairkd/nn.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fairkd {

// One-vs-rest counts for a single (class, group) cell.
struct ConfusionCell {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionCell&) const = default;
};

class GroupConfusion {
public:
    explicit GroupConfusion(std::size_t num_classes)
        : num_classes_(num_classes), cells_(2 * num_classes) {}

    std::size_t num_classes() const { return num_classes_; }
    ConfusionCell& at(std::size_t c, int k) { return cells_[c * 2 + static_cast<std::size_t>(k)]; }
    const ConfusionCell& at(std::size_t c, int k) const {
        return cells_[c * 2 + static_cast<std::size_t>(k)];
    }

    bool operator==(const GroupConfusion&) const = default;

private:
    std::size_t num_classes_;
    std::vector<ConfusionCell> cells_;
};

GroupConfusion confusion_from_predictions(std::span<const std::size_t> pred,
                                          std::span<const std::size_t> truth,
                                          std::span<const int> groups, std::size_t num_classes);

// Rates for one (class, group) cell. A rate whose denominator is zero is
// reported as 0 and flagged; TNR and FPR share a denominator.
struct CellRates {
    double tpr = 0.0;
    double tnr = 0.0;
    double fpr = 0.0;
    bool tpr_degenerate = false;
    bool tnr_degenerate = false;
};

struct RateTable {
    std::size_t num_classes = 0;
    std::vector<CellRates> cells;  // index c * 2 + k

    const CellRates& at(std::size_t c, int k) const {
        return cells[c * 2 + static_cast<std::size_t>(k)];
    }
};

RateTable rates(const GroupConfusion& conf);

// sum_c |TNR_c^1 - TNR_c^0|
double eopp0(const RateTable& r);
// sum_c |TPR_c^1 - TPR_c^0|
double eopp1(const RateTable& r);
// sum_c |TPR_c^1 - TPR_c^0 + FPR_c^1 - FPR_c^0|, without the 1/2 factor.
double eodd(const RateTable& r);

double eopp0(const GroupConfusion& conf);
double eopp1(const GroupConfusion& conf);
double eodd(const GroupConfusion& conf);

struct AccuracyRow {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct GroupAccuracy {
    std::array<AccuracyRow, 2> group;
    AccuracyRow avg;   // mean of the two groups
    AccuracyRow diff;  // |group0 - group1|
};

// Macro precision/recall/F1 per group over the classes that occur in that
// group's ground truth.
GroupAccuracy group_prf1(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                         std::span<const int> groups, std::size_t num_classes);
GroupAccuracy group_prf1(const GroupConfusion& conf);

struct DegenerateCell {
    std::size_t cls = 0;
    int group = 0;
    std::string rate;  // "tpr" or "tnr_fpr"
};

struct FairnessReport {
    std::size_t num_classes = 0;
    std::array<std::size_t, 2> group_sizes{};
    GroupAccuracy accuracy;
    double eopp0 = 0.0;
    double eopp1 = 0.0;
    double eodd = 0.0;
    std::vector<DegenerateCell> degenerate;
};

FairnessReport evaluate_fairness(std::span<const std::size_t> pred,
                                 std::span<const std::size_t> truth, std::span<const int> groups,
                                 std::size_t num_classes);

// Report as JSON text (schema in docs/fairness_report.schema.json).
std::string report_to_json(const FairnessReport& report);
// Comma-separated table: bias_group,precision,recall,f_score,eopp0,eopp1,eodd
// with rows group0, group1, avg, diff.
std::string report_to_table(const FairnessReport& report);

struct PredictionLog {
    std::vector<std::size_t> pred;
    std::vector<std::size_t> truth;
    std::vector<int> groups;

    std::size_t size() const { return pred.size(); }
};

// Header `pred,truth,group`, integer fields, one sample per row.
void write_prediction_log(const PredictionLog& log, std::ostream& out);
PredictionLog parse_prediction_log(std::istream& in);
PredictionLog load_prediction_log(const std::filesystem::path& path);

PredictionLog predict(const DenseNet& net, const Dataset& data);

// Last-hidden-layer activations for every example, keeping its label and
// group. The result uses the dataset tabular format.
Dataset export_features(const DenseNet& net, const Dataset& data);

}  // namespace fairkd

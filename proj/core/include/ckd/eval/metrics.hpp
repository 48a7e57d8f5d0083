#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ckd::eval {

// Scores and ground truths for a multi-label prediction run.
struct PredictionSet {
    std::vector<std::vector<double>> scores; // [n_samples][n_labels], values in [0,1]
    std::vector<std::vector<int>> truths;    // same shape, entries in {0,1}
    double threshold = 0.5;

    std::size_t n_samples() const { return scores.size(); }
    std::size_t n_labels() const { return scores.empty() ? 0 : scores[0].size(); }
    void validate() const;
};

struct ConfusionCounts {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
};

struct PerLabelMetrics {
    ConfusionCounts confusion;
    double f1 = 0.0;
    std::optional<double> auroc; // absent for degenerate labels
    std::optional<double> aupr;
    std::size_t support = 0; // positive truths
};

struct MetricReport {
    double accuracy = 0.0; // cell-wise micro accuracy over all sample x label cells
    double macro_f1 = 0.0;
    double auroc = 0.0; // macro over non-degenerate labels
    double aupr = 0.0;
    std::vector<PerLabelMetrics> per_label;
    std::vector<std::size_t> auroc_excluded_labels; // no positives or no negatives
    double threshold = 0.5;
};

// Fraction of (sample, label) cells where the thresholded score matches the
// truth. Scores at exactly the threshold count as positive predictions.
double accuracy(const PredictionSet& preds);

// Unweighted mean of per-label F1. A label with zero predicted and zero
// actual positives contributes F1 = 0.
double macro_f1(const PredictionSet& preds);

// Per label, the probability that a random positive outscores a random
// negative, ties at half credit (Mann-Whitney rank form); macro-averaged
// over labels with at least one positive and one negative. Throws when every
// label is degenerate.
double auroc(const PredictionSet& preds);

// Per label, the step-wise sum of (recall increment x precision) over
// descending unique score thresholds; macro-averaged with the same
// degenerate-label exclusion as auroc.
double aupr(const PredictionSet& preds);

// Per-label auroc/aupr; nullopt for degenerate labels.
std::optional<double> auroc_single(const std::vector<double>& scores,
                                   const std::vector<int>& truths);
std::optional<double> aupr_single(const std::vector<double>& scores,
                                  const std::vector<int>& truths);

// (tn, fp, fn, tp) per label at the fixed threshold; counts always sum to
// n_samples per label.
std::vector<ConfusionCounts> confusion_per_label(const PredictionSet& preds);

MetricReport compute_metrics(const PredictionSet& preds);

// Serializations: JSON report, aligned text table, and delimited confusion
// rows consumable by external plotting.
std::string metric_report_json(const MetricReport& report,
                               const std::vector<std::string>& label_names);
std::string metric_report_table(const MetricReport& report,
                                const std::vector<std::string>& label_names);
void write_confusion_csv(const std::filesystem::path& path, const MetricReport& report,
                         const std::vector<std::string>& label_names);

} // namespace ckd::eval

#include "ckd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ckd/errors.hpp"

namespace ckd::eval {

namespace {

std::vector<double> label_scores(const PredictionSet& preds, std::size_t label) {
    std::vector<double> out(preds.n_samples());
    for (std::size_t i = 0; i < preds.n_samples(); ++i) {
        out[i] = preds.scores[i][label];
    }
    return out;
}

std::vector<int> label_truths(const PredictionSet& preds, std::size_t label) {
    std::vector<int> out(preds.n_samples());
    for (std::size_t i = 0; i < preds.n_samples(); ++i) {
        out[i] = preds.truths[i][label];
    }
    return out;
}

double f1_from_confusion(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp);
    const double precision_den = tp + static_cast<double>(c.fp);
    const double recall_den = tp + static_cast<double>(c.fn);
    if (precision_den == 0.0 || recall_den == 0.0) {
        return 0.0;
    }
    const double precision = tp / precision_den;
    const double recall = tp / recall_den;
    if (precision + recall == 0.0) {
        return 0.0;
    }
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace

void PredictionSet::validate() const {
    if (scores.empty()) {
        throw contract_error("prediction set is empty");
    }
    if (scores.size() != truths.size()) {
        throw shape_error("prediction set has " + std::to_string(scores.size()) +
                          " score rows but " + std::to_string(truths.size()) + " truth rows");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw config_error("decision threshold must lie in (0,1), got " +
                           std::to_string(threshold));
    }
    const std::size_t labels = scores[0].size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].size() != labels || truths[i].size() != labels) {
            throw shape_error("prediction row " + std::to_string(i) + " width mismatch");
        }
        for (std::size_t j = 0; j < labels; ++j) {
            if (!(scores[i][j] >= 0.0 && scores[i][j] <= 1.0)) {
                throw contract_error("score outside [0,1] at (" + std::to_string(i) + "," +
                                     std::to_string(j) + "): " + std::to_string(scores[i][j]));
            }
            if (truths[i][j] != 0 && truths[i][j] != 1) {
                throw contract_error("truth entries must be 0/1, got " +
                                     std::to_string(truths[i][j]));
            }
        }
    }
}

std::vector<ConfusionCounts> confusion_per_label(const PredictionSet& preds) {
    preds.validate();
    std::vector<ConfusionCounts> out(preds.n_labels());
    for (std::size_t i = 0; i < preds.n_samples(); ++i) {
        for (std::size_t j = 0; j < preds.n_labels(); ++j) {
            const bool predicted = preds.scores[i][j] >= preds.threshold;
            const bool actual = preds.truths[i][j] == 1;
            if (predicted && actual) {
                ++out[j].tp;
            } else if (predicted && !actual) {
                ++out[j].fp;
            } else if (!predicted && actual) {
                ++out[j].fn;
            } else {
                ++out[j].tn;
            }
        }
    }
    return out;
}

double accuracy(const PredictionSet& preds) {
    preds.validate();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.n_samples(); ++i) {
        for (std::size_t j = 0; j < preds.n_labels(); ++j) {
            const int predicted = preds.scores[i][j] >= preds.threshold ? 1 : 0;
            if (predicted == preds.truths[i][j]) {
                ++correct;
            }
        }
    }
    return static_cast<double>(correct) /
           static_cast<double>(preds.n_samples() * preds.n_labels());
}

double macro_f1(const PredictionSet& preds) {
    const auto confusion = confusion_per_label(preds);
    double sum = 0.0;
    for (const auto& c : confusion) {
        sum += f1_from_confusion(c);
    }
    return sum / static_cast<double>(confusion.size());
}

std::optional<double> auroc_single(const std::vector<double>& scores,
                                   const std::vector<int>& truths) {
    std::size_t pos = 0;
    for (int t : truths) {
        pos += static_cast<std::size_t>(t);
    }
    const std::size_t neg = truths.size() - pos;
    if (pos == 0 || neg == 0) {
        return std::nullopt;
    }
    // Mann-Whitney U via average ranks (exact half credit for ties).
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (truths[order[k]] == 1) {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(neg));
}

std::optional<double> aupr_single(const std::vector<double>& scores,
                                  const std::vector<int>& truths) {
    std::size_t pos = 0;
    for (int t : truths) {
        pos += static_cast<std::size_t>(t);
    }
    const std::size_t neg = truths.size() - pos;
    if (pos == 0 || neg == 0) {
        return std::nullopt;
    }
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        // Positives at equal scores enter as one threshold group.
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (truths[order[j]] == 1) {
                ++tp;
            } else {
                ++fp;
            }
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

namespace {

double macro_over_labels(const PredictionSet& preds,
                         std::optional<double> (*metric)(const std::vector<double>&,
                                                         const std::vector<int>&),
                         const char* name) {
    preds.validate();
    double sum = 0.0;
    std::size_t included = 0;
    for (std::size_t j = 0; j < preds.n_labels(); ++j) {
        const auto value = metric(label_scores(preds, j), label_truths(preds, j));
        if (value) {
            sum += *value;
            ++included;
        }
    }
    if (included == 0) {
        throw contract_error(std::string(name) +
                             " undefined: every label lacks a positive or a negative");
    }
    return sum / static_cast<double>(included);
}

} // namespace

double auroc(const PredictionSet& preds) {
    return macro_over_labels(preds, auroc_single, "auroc");
}

double aupr(const PredictionSet& preds) {
    return macro_over_labels(preds, aupr_single, "aupr");
}

MetricReport compute_metrics(const PredictionSet& preds) {
    MetricReport report;
    report.threshold = preds.threshold;
    report.accuracy = accuracy(preds);
    const auto confusion = confusion_per_label(preds);
    double f1_sum = 0.0;
    double auroc_sum = 0.0, aupr_sum = 0.0;
    std::size_t included = 0;
    for (std::size_t j = 0; j < confusion.size(); ++j) {
        PerLabelMetrics m;
        m.confusion = confusion[j];
        m.support = confusion[j].tp + confusion[j].fn;
        m.f1 = f1_from_confusion(confusion[j]);
        f1_sum += m.f1;
        m.auroc = auroc_single(label_scores(preds, j), label_truths(preds, j));
        m.aupr = aupr_single(label_scores(preds, j), label_truths(preds, j));
        if (m.auroc) {
            auroc_sum += *m.auroc;
            aupr_sum += *m.aupr;
            ++included;
        } else {
            report.auroc_excluded_labels.push_back(j);
        }
        report.per_label.push_back(m);
    }
    report.macro_f1 = f1_sum / static_cast<double>(confusion.size());
    if (included == 0) {
        throw contract_error("auroc undefined: every label lacks a positive or a negative");
    }
    report.auroc = auroc_sum / static_cast<double>(included);
    report.aupr = aupr_sum / static_cast<double>(included);
    return report;
}

std::string metric_report_json(const MetricReport& report,
                               const std::vector<std::string>& label_names) {
    nlohmann::ordered_json j;
    j["conventions"] = {
        {"accuracy", "micro over all sample x label cells"},
        {"f1", "macro over labels; empty labels contribute 0"},
        {"auroc", "macro over labels with >=1 positive and >=1 negative; ties half credit"},
        {"aupr", "macro with the same label exclusion; step-wise threshold sum"},
        {"threshold", report.threshold},
    };
    j["accuracy"] = report.accuracy;
    j["macro_f1"] = report.macro_f1;
    j["auroc"] = report.auroc;
    j["aupr"] = report.aupr;
    j["auroc_excluded_labels"] = report.auroc_excluded_labels;
    j["per_label"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.per_label.size(); ++i) {
        const auto& m = report.per_label[i];
        nlohmann::ordered_json row;
        row["label"] = i < label_names.size() ? label_names[i] : std::to_string(i);
        row["tp"] = m.confusion.tp;
        row["fp"] = m.confusion.fp;
        row["tn"] = m.confusion.tn;
        row["fn"] = m.confusion.fn;
        row["support"] = m.support;
        row["f1"] = m.f1;
        if (m.auroc) {
            row["auroc"] = *m.auroc;
        } else {
            row["auroc"] = nullptr;
        }
        if (m.aupr) {
            row["aupr"] = *m.aupr;
        } else {
            row["aupr"] = nullptr;
        }
        j["per_label"].push_back(row);
    }
    return j.dump(2) + "\n";
}

std::string metric_report_table(const MetricReport& report,
                                const std::vector<std::string>& label_names) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line),
                  "accuracy=%.4f  macro_f1=%.4f  auroc=%.4f  aupr=%.4f  (threshold %.2f, "
                  "accuracy micro cell-wise, others macro over labels)\n",
                  report.accuracy, report.macro_f1, report.auroc, report.aupr, report.threshold);
    out << line;
    std::snprintf(line, sizeof(line), "%-45s %6s %6s %6s %6s %8s %7s %7s %7s\n", "label", "tp",
                  "fp", "tn", "fn", "support", "f1", "auroc", "aupr");
    out << line;
    for (std::size_t i = 0; i < report.per_label.size(); ++i) {
        const auto& m = report.per_label[i];
        const std::string name = i < label_names.size() ? label_names[i] : std::to_string(i);
        std::string auroc_str = m.auroc ? [&] {
            char b[16];
            std::snprintf(b, sizeof(b), "%7.4f", *m.auroc);
            return std::string(b);
        }() : std::string("      -");
        std::string aupr_str = m.aupr ? [&] {
            char b[16];
            std::snprintf(b, sizeof(b), "%7.4f", *m.aupr);
            return std::string(b);
        }() : std::string("      -");
        std::snprintf(line, sizeof(line), "%-45s %6zu %6zu %6zu %6zu %8zu %7.4f %s %s\n",
                      name.c_str(), m.confusion.tp, m.confusion.fp, m.confusion.tn,
                      m.confusion.fn, m.support, m.f1, auroc_str.c_str(), aupr_str.c_str());
        out << line;
    }
    return out.str();
}

void write_confusion_csv(const std::filesystem::path& path, const MetricReport& report,
                         const std::vector<std::string>& label_names) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write confusion table: " + path.string());
    }
    out << "label,tn,fp,fn,tp\n";
    for (std::size_t i = 0; i < report.per_label.size(); ++i) {
        const auto& c = report.per_label[i].confusion;
        const std::string name = i < label_names.size() ? label_names[i] : std::to_string(i);
        out << '"' << name << "\"," << c.tn << ',' << c.fp << ',' << c.fn << ',' << c.tp << '\n';
    }
}

} // namespace ckd::eval

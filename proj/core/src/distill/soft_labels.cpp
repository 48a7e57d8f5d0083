#include "ckd/distill/soft_labels.hpp"

#include <algorithm>
#include <cmath>

#include "ckd/errors.hpp"

namespace ckd::distill {

SoftLabelStrategy strategy_from_string(const std::string& s) {
    if (s == "mlaph") {
        return SoftLabelStrategy::mlaph;
    }
    if (s == "avg-prob") {
        return SoftLabelStrategy::avg_prob;
    }
    if (s == "single-cls-prob") {
        return SoftLabelStrategy::single_cls_prob;
    }
    throw config_error("unknown soft-label strategy: " + s +
                       " (expected mlaph, avg-prob, or single-cls-prob)");
}

const char* to_string(SoftLabelStrategy strategy) {
    switch (strategy) {
    case SoftLabelStrategy::mlaph:
        return "mlaph";
    case SoftLabelStrategy::avg_prob:
        return "avg-prob";
    default:
        return "single-cls-prob";
    }
}

std::vector<std::vector<double>> soft_labels_mlaph(const model::Encoder& teacher,
                                                   const model::Mlaph& head,
                                                   const model::TokenBatch& batch) {
    const Tensor hidden = teacher.forward(nullptr, batch);
    const Tensor logits = model::mlaph_forward(nullptr, head, hidden, batch.mask);
    const Tensor probs = sigmoid(nullptr, logits);
    const std::size_t labels = probs.cols();
    std::vector<std::vector<double>> out(batch.batch, std::vector<double>(labels));
    for (std::size_t i = 0; i < batch.batch; ++i) {
        for (std::size_t j = 0; j < labels; ++j) {
            out[i][j] = probs.at(i, j);
        }
    }
    return out;
}

std::vector<std::vector<double>>
avg_prob_raw_scores(const model::Encoder& teacher, const model::TokenBatch& batch,
                    const std::vector<std::vector<int>>& label_token_ids,
                    const fusion::PhenotypeRegistry& registry) {
    for (std::size_t l = 0; l < label_token_ids.size(); ++l) {
        if (label_token_ids[l].empty()) {
            throw config_error("label \"" + registry.name(l) +
                               "\" has no vocabulary tokens; refit the vocabulary with the "
                               "registry names included");
        }
    }
    const Tensor logits = model::vocab_logits(nullptr, teacher, batch);
    const std::size_t s = batch.seq;
    const std::size_t v = teacher.config().vocab_size;
    const Tensor flat = reshape(nullptr, logits, {batch.batch * s, v});
    std::vector<std::vector<double>> scores(batch.batch,
                                            std::vector<double>(label_token_ids.size()));
    for (std::size_t i = 0; i < batch.batch; ++i) {
        // Prediction position: the final unmasked token of the row.
        std::size_t last = 0;
        bool any = false;
        for (std::size_t j = 0; j < s; ++j) {
            if (batch.mask[i * s + j] != 0) {
                last = j;
                any = true;
            }
        }
        if (!any) {
            throw contract_error("avg-prob: batch row " + std::to_string(i) + " is all PAD");
        }
        const Tensor row = slice_rows(nullptr, flat, i * s + last, i * s + last + 1);
        const Tensor probs = softmax_rows(nullptr, row);
        for (std::size_t l = 0; l < label_token_ids.size(); ++l) {
            double sum = 0.0;
            for (int id : label_token_ids[l]) {
                sum += probs.at(0, static_cast<std::size_t>(id));
            }
            scores[i][l] = sum / static_cast<double>(label_token_ids[l].size());
        }
    }
    return scores;
}

std::vector<std::vector<double>> min_max_rescale_rows(std::vector<std::vector<double>> rows,
                                                      double eps) {
    for (auto& row : rows) {
        const auto [mn_it, mx_it] = std::minmax_element(row.begin(), row.end());
        const double mn = *mn_it, mx = *mx_it;
        if (mx - mn <= 0.0) {
            std::fill(row.begin(), row.end(), 0.5);
            continue;
        }
        for (double& x : row) {
            x = eps + (1.0 - 2.0 * eps) * (x - mn) / (mx - mn);
        }
    }
    return rows;
}

std::vector<std::vector<double>>
soft_labels_avg_prob(const model::Encoder& teacher, const model::TokenBatch& batch,
                     const std::vector<std::vector<int>>& label_token_ids,
                     const fusion::PhenotypeRegistry& registry) {
    return min_max_rescale_rows(
        avg_prob_raw_scores(teacher, batch, label_token_ids, registry));
}

SingleClassSplit build_single_class_split(const std::vector<fusion::FusedSample>& samples) {
    SingleClassSplit split;
    for (const auto& s : samples) {
        bool any = false;
        for (std::size_t l = 0; l < s.label.size(); ++l) {
            if (s.label[l] == 1) {
                split.texts.push_back(s.text);
                split.class_ids.push_back(static_cast<int>(l));
                any = true;
            }
        }
        if (!any) {
            split.texts.push_back(s.text);
            split.class_ids.push_back(SingleClassSplit::kNoneClass);
        }
    }
    return split;
}

std::vector<std::vector<double>> soft_labels_single_cls(const SingleClsTeacher& teacher,
                                                        const model::TokenBatch& batch) {
    const Tensor hidden = teacher.encoder.forward(nullptr, batch);
    const Tensor logits = model::mlaph_forward(nullptr, teacher.head, hidden, batch.mask);
    const Tensor probs = softmax_rows(nullptr, logits);
    const std::size_t classes = probs.cols();
    if (classes < 2) {
        throw contract_error("single-cls head must have at least two classes");
    }
    std::vector<std::vector<double>> out(batch.batch, std::vector<double>(classes - 1));
    for (std::size_t i = 0; i < batch.batch; ++i) {
        for (std::size_t j = 0; j + 1 < classes; ++j) {
            out[i][j] = probs.at(i, j);
        }
    }
    return out;
}

} // namespace ckd::distill

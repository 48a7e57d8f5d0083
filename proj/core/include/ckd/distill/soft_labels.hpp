#pragma once

#include <string>
#include <vector>

#include "ckd/fusion/render.hpp"
#include "ckd/model/encoder.hpp"
#include "ckd/model/vocab.hpp"

namespace ckd::distill {

enum class SoftLabelStrategy { mlaph, avg_prob, single_cls_prob };

SoftLabelStrategy strategy_from_string(const std::string& s);
const char* to_string(SoftLabelStrategy strategy);

// Per-label probabilities [batch x num_labels], strictly inside (0,1).
// sigmoid of the projection-head logits; no gradients flow into the teacher.
std::vector<std::vector<double>> soft_labels_mlaph(const model::Encoder& teacher,
                                                   const model::Mlaph& head,
                                                   const model::TokenBatch& batch);

// Vocabulary-probability variant: softmax over the vocabulary at the final
// unmasked position, per-label mean of its token-id probabilities, then a
// per-sample min-max rescale into (eps, 1-eps). Rank order across labels is
// preserved by the rescale.
inline constexpr double kAvgProbEps = 1e-4;
std::vector<std::vector<double>>
soft_labels_avg_prob(const model::Encoder& teacher, const model::TokenBatch& batch,
                     const std::vector<std::vector<int>>& label_token_ids,
                     const fusion::PhenotypeRegistry& registry);

// Raw per-label scores before rescaling (the averaged token masses);
// exposed for the rank-preservation property checks.
std::vector<std::vector<double>>
avg_prob_raw_scores(const model::Encoder& teacher, const model::TokenBatch& batch,
                    const std::vector<std::vector<int>>& label_token_ids,
                    const fusion::PhenotypeRegistry& registry);

std::vector<std::vector<double>> min_max_rescale_rows(std::vector<std::vector<double>> rows,
                                                      double eps = kAvgProbEps);

// One training row per positive label of each sample (input text unchanged);
// samples with no positive label map to a reserved extra class, which the
// assembled 25-wide output later excludes.
struct SingleClassSplit {
    std::vector<std::string> texts;
    std::vector<int> class_ids; // 0..24 real labels, 25 = none marker
    static constexpr int kNoneClass = 25;
};

SingleClassSplit build_single_class_split(const std::vector<fusion::FusedSample>& samples);

// Teacher re-fine-tuned on the split with a (num_labels+1)-way softmax head
// so it commits to the single most likely class.
struct SingleClsTeacher {
    model::Encoder encoder;
    model::Mlaph head; // num_labels+1 outputs
};

// softmax over the 26-way head; the 25 real-class probabilities are the soft
// labels (each strictly inside (0,1)).
std::vector<std::vector<double>> soft_labels_single_cls(const SingleClsTeacher& teacher,
                                                        const model::TokenBatch& batch);

} // namespace ckd::distill

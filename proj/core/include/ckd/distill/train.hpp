#pragma once

#include <cstdint>
#include <vector>

#include "ckd/distill/loss.hpp"
#include "ckd/distill/soft_labels.hpp"
#include "ckd/fusion/render.hpp"
#include "ckd/model/encoder.hpp"
#include "ckd/model/vocab.hpp"

namespace ckd::distill {

struct TrainOptions {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double lr = 2e-3;
    std::uint64_t seed = 42;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double wall_seconds = 0.0; // reported separately from the data outputs
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    // Training hit a non-finite loss or gradient; parameters were restored
    // to the last completed epoch.
    bool diverged = false;
};

// Pre-tokenized corpus; tokenization is deterministic so this is pure
// caching. Batches gather rows by index.
struct TokenizedCorpus {
    std::size_t seq = 0;
    std::vector<model::TokenizedText> rows;
    std::vector<std::vector<int>> labels;

    static TokenizedCorpus build(const std::vector<fusion::FusedSample>& samples,
                                 const model::Vocabulary& vocab, std::size_t max_seq_len);
    std::size_t size() const { return rows.size(); }
    model::TokenBatch gather(const std::vector<std::size_t>& indices) const;
    Tensor gather_labels(const std::vector<std::size_t>& indices) const;
};

// Supervised fine-tune of the teacher on hard labels: only the attached
// LoRA adapters and the projection head receive updates; every base weight
// stays frozen. Requires adapters to be attached.
TrainResult finetune_teacher(model::Encoder& teacher, model::Mlaph& head,
                             const TokenizedCorpus& corpus, const TrainOptions& options,
                             const std::vector<double>& label_weights = {});

// Distillation: per batch the student loss is
// alpha * BCE(y0, y) + (1-alpha) * BCE(y0, y1) with y1 the cached teacher
// probabilities. soft_labels may be empty only when alpha == 1, in which
// case the soft term is skipped entirely.
TrainResult distill_student(model::Encoder& student, model::Mlaph& head,
                            const TokenizedCorpus& corpus,
                            const std::vector<std::vector<double>>& soft_labels,
                            const LossConfig& loss, const TrainOptions& options);

// sigmoid(head(encoder(x))) over the whole corpus, batched, inference only.
std::vector<std::vector<double>> predict_probabilities(const model::Encoder& encoder,
                                                       const model::Mlaph& head,
                                                       const TokenizedCorpus& corpus,
                                                       std::size_t batch_size);

// Per-sample teacher probabilities under the chosen strategy. The
// single-cls-prob strategy needs its split-fine-tuned teacher.
std::vector<std::vector<double>>
extract_soft_labels(SoftLabelStrategy strategy, const model::Encoder& teacher,
                    const model::Mlaph& head, const std::vector<fusion::FusedSample>& samples,
                    const model::Vocabulary& vocab, const fusion::PhenotypeRegistry& registry,
                    std::size_t max_seq_len, std::size_t batch_size,
                    const SingleClsTeacher* single_cls = nullptr);

// Re-fine-tunes a copy of the teacher on the per-label split with a
// (num_labels+1)-way softmax head.
SingleClsTeacher finetune_single_cls(const model::Encoder& teacher, std::size_t lora_rank,
                                     const std::vector<fusion::FusedSample>& samples,
                                     const model::Vocabulary& vocab, std::size_t max_seq_len,
                                     const TrainOptions& options);

struct AlphaSweepRow {
    double alpha = 0.0;
    double acc = 0.0;
    double macro_f1 = 0.0;
    double auroc = 0.0;
    double aupr = 0.0;
};

inline const std::vector<double> kDefaultAlphaSweep = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

struct SweepInputs {
    const TokenizedCorpus* train = nullptr;
    const std::vector<std::vector<double>>* soft_labels = nullptr; // teacher, on train
    const TokenizedCorpus* eval = nullptr;
    model::EncoderConfig student_config;
    model::Mlaph::Pooling pooling = model::Mlaph::Pooling::last_token;
    TrainOptions train_options; // shared seed across alphas
    std::vector<double> label_weights;
    std::size_t max_workers = 1;
};

// One full student training + held-out evaluation per alpha, all sharing the
// teacher's cached soft labels and the same seed. Rows come back in the
// order of `alphas` regardless of worker scheduling.
std::vector<AlphaSweepRow> alpha_sweep(const std::vector<double>& alphas,
                                       const SweepInputs& inputs);

} // namespace ckd::distill

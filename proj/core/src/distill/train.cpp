#include "ckd/distill/train.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <thread>

#include "ckd/errors.hpp"
#include "ckd/eval/metrics.hpp"
#include "ckd/optim.hpp"

namespace ckd::distill {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

// Snapshot/restore of parameter values around a possibly diverging epoch.
std::vector<std::vector<double>> snapshot_values(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(p.data());
    }
    return out;
}

void restore_values(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].data() = snap[i];
    }
}

struct SoftTargetSource {
    const std::vector<std::vector<double>>* per_sample = nullptr;
    std::size_t num_labels = 0;

    Tensor gather(const std::vector<std::size_t>& indices) const {
        std::vector<double> data;
        data.reserve(indices.size() * num_labels);
        for (std::size_t idx : indices) {
            const auto& row = (*per_sample)[idx];
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor::from_data({indices.size(), num_labels}, std::move(data));
    }
};

// Shared epoch loop for every training variant. `loss_fn` builds the scalar
// loss for one batch on the given tape.
template <typename LossFn>
TrainResult run_training(std::vector<Tensor> trainable, std::size_t n_samples,
                         const TrainOptions& options, LossFn&& loss_fn) {
    TrainResult result;
    if (options.batch_size < 1) {
        throw config_error("batch_size must be >= 1");
    }
    AdamState optimizer(trainable, options.lr);
    Rng shuffle_rng(options.seed);
    auto snapshot = snapshot_values(trainable);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const auto started = Clock::now();
        const auto batches = batch_indices(n_samples, options.batch_size, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t rows = 0;
        bool diverged = false;
        for (const auto& batch : batches) {
            Tape tape;
            Tensor loss = loss_fn(tape, batch);
            if (!std::isfinite(loss.item())) {
                diverged = true;
                break;
            }
            loss_sum += loss.item() * static_cast<double>(batch.size());
            rows += batch.size();
            optimizer.zero_grad();
            backward(tape, loss);
            try {
                optimizer.step();
            } catch (const divergence_error&) {
                diverged = true;
                break;
            }
        }
        if (diverged) {
            restore_values(trainable, snapshot);
            result.diverged = true;
            break;
        }
        snapshot = snapshot_values(trainable);
        EpochLog log;
        log.epoch = epoch + 1;
        log.loss = rows ? loss_sum / static_cast<double>(rows) : 0.0;
        log.wall_seconds = seconds_since(started);
        result.epochs.push_back(log);
    }
    return result;
}

} // namespace

TokenizedCorpus TokenizedCorpus::build(const std::vector<fusion::FusedSample>& samples,
                                       const model::Vocabulary& vocab, std::size_t max_seq_len) {
    TokenizedCorpus corpus;
    corpus.seq = max_seq_len;
    corpus.rows.reserve(samples.size());
    corpus.labels.reserve(samples.size());
    for (const auto& s : samples) {
        corpus.rows.push_back(model::tokenize(s.text, vocab, max_seq_len));
        corpus.labels.push_back(s.label);
    }
    return corpus;
}

model::TokenBatch TokenizedCorpus::gather(const std::vector<std::size_t>& indices) const {
    model::TokenBatch batch;
    batch.batch = indices.size();
    batch.seq = seq;
    batch.ids.reserve(indices.size() * seq);
    batch.mask.reserve(indices.size() * seq);
    for (std::size_t idx : indices) {
        const auto& row = rows[idx];
        batch.ids.insert(batch.ids.end(), row.ids.begin(), row.ids.end());
        batch.mask.insert(batch.mask.end(), row.mask.begin(), row.mask.end());
    }
    return batch;
}

Tensor TokenizedCorpus::gather_labels(const std::vector<std::size_t>& indices) const {
    const std::size_t width = labels.empty() ? 0 : labels[0].size();
    std::vector<double> data;
    data.reserve(indices.size() * width);
    for (std::size_t idx : indices) {
        for (int v : labels[idx]) {
            data.push_back(static_cast<double>(v));
        }
    }
    return Tensor::from_data({indices.size(), width}, std::move(data));
}

TrainResult finetune_teacher(model::Encoder& teacher, model::Mlaph& head,
                             const TokenizedCorpus& corpus, const TrainOptions& options,
                             const std::vector<double>& label_weights) {
    if (!teacher.has_lora()) {
        throw contract_error("finetune_teacher requires LoRA adapters attached");
    }
    teacher.freeze_base();
    for (auto& p : head.parameters()) {
        p.set_requires_grad(true);
    }
    std::vector<Tensor> trainable = teacher.trainable_parameters();
    for (auto& p : head.parameters()) {
        trainable.push_back(p);
    }
    return run_training(std::move(trainable), corpus.size(), options,
                        [&](Tape& tape, const std::vector<std::size_t>& batch) {
                            const auto tokens = corpus.gather(batch);
                            const Tensor hidden = teacher.forward(&tape, tokens);
                            const Tensor logits =
                                model::mlaph_forward(&tape, head, hidden, tokens.mask);
                            return bce_with_logits(&tape, logits, corpus.gather_labels(batch),
                                                   label_weights);
                        });
}

TrainResult distill_student(model::Encoder& student, model::Mlaph& head,
                            const TokenizedCorpus& corpus,
                            const std::vector<std::vector<double>>& soft_labels,
                            const LossConfig& loss, const TrainOptions& options) {
    loss.validate();
    const std::size_t num_labels = student.config().num_labels;
    const bool use_soft = loss.alpha < 1.0;
    if (use_soft) {
        if (soft_labels.size() != corpus.size()) {
            throw missing_artifact_error("distill_student: " + std::to_string(soft_labels.size()) +
                                         " soft-label rows for " + std::to_string(corpus.size()) +
                                         " samples");
        }
        for (const auto& row : soft_labels) {
            if (row.size() != num_labels) {
                throw contract_error("teacher/student label-space mismatch: soft row has " +
                                     std::to_string(row.size()) + " labels, student expects " +
                                     std::to_string(num_labels));
            }
        }
    }
    student.set_all_trainable(true);
    for (auto& p : head.parameters()) {
        p.set_requires_grad(true);
    }
    std::vector<Tensor> trainable = student.trainable_parameters();
    for (auto& p : head.parameters()) {
        trainable.push_back(p);
    }
    SoftTargetSource soft{&soft_labels, num_labels};
    return run_training(std::move(trainable), corpus.size(), options,
                        [&, use_soft](Tape& tape, const std::vector<std::size_t>& batch) {
                            const auto tokens = corpus.gather(batch);
                            const Tensor hidden = student.forward(&tape, tokens);
                            const Tensor logits =
                                model::mlaph_forward(&tape, head, hidden, tokens.mask);
                            const Tensor hard = bce_with_logits(
                                &tape, logits, corpus.gather_labels(batch), loss.label_weights);
                            if (!use_soft) {
                                return hard;
                            }
                            const Tensor soft_loss = bce_with_logits(
                                &tape, logits, soft.gather(batch), loss.label_weights);
                            return total_loss(&tape, hard, soft_loss, loss);
                        });
}

std::vector<std::vector<double>> predict_probabilities(const model::Encoder& encoder,
                                                       const model::Mlaph& head,
                                                       const TokenizedCorpus& corpus,
                                                       std::size_t batch_size) {
    std::vector<std::vector<double>> out;
    out.reserve(corpus.size());
    for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
        const std::size_t end = std::min(corpus.size(), start + batch_size);
        std::vector<std::size_t> indices;
        for (std::size_t i = start; i < end; ++i) {
            indices.push_back(i);
        }
        const auto tokens = corpus.gather(indices);
        const Tensor hidden = encoder.forward(nullptr, tokens);
        const Tensor probs =
            sigmoid(nullptr, model::mlaph_forward(nullptr, head, hidden, tokens.mask));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            std::vector<double> row(probs.cols());
            for (std::size_t j = 0; j < probs.cols(); ++j) {
                row[j] = probs.at(i, j);
            }
            out.push_back(std::move(row));
        }
    }
    return out;
}

std::vector<std::vector<double>>
extract_soft_labels(SoftLabelStrategy strategy, const model::Encoder& teacher,
                    const model::Mlaph& head, const std::vector<fusion::FusedSample>& samples,
                    const model::Vocabulary& vocab, const fusion::PhenotypeRegistry& registry,
                    std::size_t max_seq_len, std::size_t batch_size,
                    const SingleClsTeacher* single_cls) {
    std::vector<std::vector<double>> out;
    out.reserve(samples.size());
    const auto label_ids = vocab.label_token_ids(registry);
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = start; i < end; ++i) {
            texts.push_back(samples[i].text);
        }
        const auto batch = model::tokenize_batch(texts, vocab, max_seq_len);
        std::vector<std::vector<double>> rows;
        switch (strategy) {
        case SoftLabelStrategy::mlaph:
            rows = soft_labels_mlaph(teacher, head, batch);
            break;
        case SoftLabelStrategy::avg_prob:
            rows = soft_labels_avg_prob(teacher, batch, label_ids, registry);
            break;
        case SoftLabelStrategy::single_cls_prob:
            if (!single_cls) {
                throw missing_artifact_error(
                    "single-cls-prob extraction needs the split-fine-tuned teacher");
            }
            rows = soft_labels_single_cls(*single_cls, batch);
            break;
        }
        for (auto& row : rows) {
            out.push_back(std::move(row));
        }
    }
    return out;
}

SingleClsTeacher finetune_single_cls(const model::Encoder& teacher, std::size_t lora_rank,
                                     const std::vector<fusion::FusedSample>& samples,
                                     const model::Vocabulary& vocab, std::size_t max_seq_len,
                                     const TrainOptions& options) {
    const auto split = build_single_class_split(samples);
    if (split.texts.empty()) {
        throw missing_artifact_error("single-cls split is empty");
    }
    SingleClsTeacher out;
    out.encoder = teacher.clone();
    Rng rng(options.seed);
    if (!out.encoder.has_lora()) {
        out.encoder.attach_lora(lora_rank, rng);
    }
    out.encoder.freeze_base();
    out.head = model::Mlaph::init(out.encoder.config().d_model,
                                  out.encoder.config().num_labels + 1,
                                  model::Mlaph::Pooling::last_token, rng);
    std::vector<Tensor> trainable = out.encoder.trainable_parameters();
    for (auto& p : out.head.parameters()) {
        trainable.push_back(p);
    }
    // Pre-tokenize the split rows once.
    std::vector<model::TokenizedText> rows;
    rows.reserve(split.texts.size());
    for (const auto& t : split.texts) {
        rows.push_back(model::tokenize(t, vocab, max_seq_len));
    }
    run_training(std::move(trainable), split.texts.size(), options,
                 [&](Tape& tape, const std::vector<std::size_t>& batch) {
                     model::TokenBatch tokens;
                     tokens.batch = batch.size();
                     tokens.seq = max_seq_len;
                     std::vector<int> targets;
                     for (std::size_t idx : batch) {
                         tokens.ids.insert(tokens.ids.end(), rows[idx].ids.begin(),
                                           rows[idx].ids.end());
                         tokens.mask.insert(tokens.mask.end(), rows[idx].mask.begin(),
                                            rows[idx].mask.end());
                         targets.push_back(split.class_ids[idx]);
                     }
                     const Tensor hidden = out.encoder.forward(&tape, tokens);
                     const Tensor logits =
                         model::mlaph_forward(&tape, out.head, hidden, tokens.mask);
                     return softmax_xent_mean(&tape, logits, targets);
                 });
    return out;
}

std::vector<AlphaSweepRow> alpha_sweep(const std::vector<double>& alphas,
                                       const SweepInputs& inputs) {
    if (!inputs.train || !inputs.eval || !inputs.soft_labels) {
        throw contract_error("alpha_sweep: train corpus, eval corpus, and soft labels required");
    }
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw config_error("sweep alpha " + std::to_string(a) + " outside [0,1]");
        }
    }
    auto run_one = [&inputs](double alpha) {
        Rng rng(inputs.train_options.seed);
        model::Encoder student = model::Encoder::init(inputs.student_config, rng);
        model::Mlaph head = model::Mlaph::init(inputs.student_config.d_model,
                                               inputs.student_config.num_labels,
                                               inputs.pooling, rng);
        LossConfig loss;
        loss.alpha = alpha;
        loss.label_weights = inputs.label_weights;
        distill_student(student, head, *inputs.train, *inputs.soft_labels, loss,
                        inputs.train_options);
        const auto probs = predict_probabilities(student, head, *inputs.eval,
                                                 inputs.train_options.batch_size);
        eval::PredictionSet preds;
        preds.scores = probs;
        preds.truths = inputs.eval->labels;
        const auto report = eval::compute_metrics(preds);
        AlphaSweepRow row;
        row.alpha = alpha;
        row.acc = report.accuracy;
        row.macro_f1 = report.macro_f1;
        row.auroc = report.auroc;
        row.aupr = report.aupr;
        return row;
    };

    std::vector<AlphaSweepRow> rows(alphas.size());
    const std::size_t workers = std::max<std::size_t>(1, inputs.max_workers);
    if (workers == 1 || alphas.size() <= 1) {
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            rows[i] = run_one(alphas[i]);
        }
        return rows;
    }
    std::vector<std::future<AlphaSweepRow>> pending;
    std::size_t next = 0;
    std::size_t done = 0;
    std::vector<std::size_t> slot_index;
    while (done < alphas.size()) {
        while (next < alphas.size() && pending.size() < workers) {
            pending.push_back(std::async(std::launch::async, run_one, alphas[next]));
            slot_index.push_back(next);
            ++next;
        }
        rows[slot_index.front()] = pending.front().get();
        pending.erase(pending.begin());
        slot_index.erase(slot_index.begin());
        ++done;
    }
    return rows;
}

} // namespace ckd::distill

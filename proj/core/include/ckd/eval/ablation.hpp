#pragma once

#include <string>
#include <vector>

#include "ckd/distill/train.hpp"
#include "ckd/eval/metrics.hpp"
#include "ckd/fusion/render.hpp"
#include "ckd/fusion/synthetic.hpp"

namespace ckd::eval {

struct AblationFlags {
    bool eadf = true;   // fused text with efficacy clause vs raw visit text
    bool lorckd = true; // distilled student vs direct teacher evaluation
};

struct AblationRow {
    AblationFlags flags;
    MetricReport report;
    std::string model;        // "teacher" or "student"
    std::string teacher_mode; // "finetuned" or "zero-shot"
    std::string input_hash;   // hash over the texts the run consumed
};

struct AblationPipelineConfig {
    const std::vector<fusion::VisitRecord>* records = nullptr;
    const fusion::PhenotypeRegistry* registry = nullptr;
    std::string template_text; // empty = builtin
    double train_fraction = 0.8;
    std::uint64_t seed = 42;

    model::EncoderConfig teacher_config = model::EncoderConfig::teacher_defaults();
    model::EncoderConfig student_config = model::EncoderConfig::student_defaults();
    std::size_t lora_rank = 4;
    model::Mlaph::Pooling pooling = model::Mlaph::Pooling::last_token;
    distill::TrainOptions teacher_train{.epochs = 5, .batch_size = 32, .lr = 5e-3, .seed = 42};
    distill::TrainOptions student_train{.epochs = 10, .batch_size = 32, .lr = 2e-3, .seed = 42};
    distill::LossConfig loss;
    distill::SoftLabelStrategy strategy = distill::SoftLabelStrategy::mlaph;
    // Whether the teacher used by the run is fine-tuned first; the row is
    // labeled either way.
    bool finetune_teacher = true;
    std::size_t top_k = 5;
};

// One pipeline run for a flag combination. Corpus, split, and every seed are
// taken from the config, so the four combinations are directly comparable.
AblationRow ablation_run(const AblationFlags& flags, const AblationPipelineConfig& config);

// The 2x2 grid in a fixed order: (false,false), (false,true), (true,false),
// (true,true).
std::vector<AblationRow> ablation_run_all(const AblationPipelineConfig& config);

std::string ablation_table_csv(const std::vector<AblationRow>& rows);

} // namespace ckd::eval

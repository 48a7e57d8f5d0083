#include "ckd/eval/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "ckd/errors.hpp"
#include "ckd/manifest.hpp"

namespace ckd::eval {

namespace {

std::vector<fusion::FusedSample> render_split(const std::vector<fusion::VisitPair>& pairs,
                                              bool eadf, const fusion::EfficacyTable& table,
                                              const fusion::PhenotypeRegistry& registry,
                                              const fusion::SampleTemplate& tmpl,
                                              std::size_t top_k) {
    std::vector<fusion::FusedSample> out;
    out.reserve(pairs.size());
    for (const auto& pair : pairs) {
        if (eadf) {
            out.push_back(fusion::render_sample(pair, table, registry, tmpl, top_k));
        } else {
            fusion::FusedSample s;
            s.text = fusion::render_raw_text(pair.source);
            s.label = fusion::phenotype_labels(pair.next_diagnoses, registry);
            s.patient_id = pair.source.patient_id;
            s.visit_index = pair.visit_index;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string hash_texts(const std::vector<fusion::FusedSample>& train,
                       const std::vector<fusion::FusedSample>& eval_samples) {
    std::string all;
    for (const auto& s : train) {
        all += s.text;
        all += '\n';
    }
    for (const auto& s : eval_samples) {
        all += s.text;
        all += '\n';
    }
    return fnv1a64_hex(all);
}

} // namespace

AblationRow ablation_run(const AblationFlags& flags, const AblationPipelineConfig& config) {
    if (!config.records || !config.registry) {
        throw contract_error("ablation_run: records and registry are required");
    }
    const auto& registry = *config.registry;
    const auto pairs = fusion::build_visit_pairs(*config.records);
    if (pairs.empty()) {
        throw contract_error("ablation_run: corpus has no visit pairs");
    }
    const auto split = fusion::split_pairs_by_patient(pairs, config.train_fraction, config.seed);
    if (split.train.empty() || split.eval.empty()) {
        throw contract_error("ablation_run: split left one side empty; widen the corpus");
    }
    const auto tmpl = config.template_text.empty()
                          ? fusion::SampleTemplate::builtin()
                          : fusion::SampleTemplate::from_text(config.template_text);
    // Efficacy statistics come from the training split only.
    const auto table = fusion::rank_efficacy(split.train);
    const auto train_samples =
        render_split(split.train, flags.eadf, table, registry, tmpl, config.top_k);
    const auto eval_samples =
        render_split(split.eval, flags.eadf, table, registry, tmpl, config.top_k);

    std::vector<std::string> fit_texts;
    fit_texts.reserve(train_samples.size() + registry.entries().size());
    for (const auto& s : train_samples) {
        fit_texts.push_back(s.text);
    }
    for (const auto& e : registry.entries()) {
        fit_texts.push_back(e.name);
    }
    const auto vocab = model::Vocabulary::fit(fit_texts);

    model::EncoderConfig teacher_config = config.teacher_config;
    teacher_config.vocab_size = vocab.size();
    Rng teacher_rng(config.teacher_train.seed);
    model::Encoder teacher = model::Encoder::init(teacher_config, teacher_rng);
    teacher.attach_lora(config.lora_rank, teacher_rng);
    model::Mlaph teacher_head = model::Mlaph::init(teacher_config.d_model,
                                                   teacher_config.num_labels, config.pooling,
                                                   teacher_rng);
    const auto train_corpus =
        distill::TokenizedCorpus::build(train_samples, vocab, teacher_config.max_seq_len);
    const auto eval_corpus =
        distill::TokenizedCorpus::build(eval_samples, vocab, teacher_config.max_seq_len);
    if (config.finetune_teacher) {
        distill::finetune_teacher(teacher, teacher_head, train_corpus, config.teacher_train,
                                  config.loss.label_weights);
    }

    AblationRow row;
    row.flags = flags;
    row.teacher_mode = config.finetune_teacher ? "finetuned" : "zero-shot";
    row.input_hash = hash_texts(train_samples, eval_samples);

    PredictionSet preds;
    preds.truths = eval_corpus.labels;
    if (!flags.lorckd) {
        row.model = "teacher";
        preds.scores = distill::predict_probabilities(teacher, teacher_head, eval_corpus,
                                                      config.teacher_train.batch_size);
    } else {
        row.model = "student";
        const auto soft = distill::extract_soft_labels(
            config.strategy, teacher, teacher_head, train_samples, vocab, registry,
            teacher_config.max_seq_len, config.teacher_train.batch_size);
        model::EncoderConfig student_config = config.student_config;
        student_config.vocab_size = vocab.size();
        Rng student_rng(config.student_train.seed);
        model::Encoder student = model::Encoder::init(student_config, student_rng);
        model::Mlaph student_head = model::Mlaph::init(
            student_config.d_model, student_config.num_labels, config.pooling, student_rng);
        distill::distill_student(student, student_head, train_corpus, soft, config.loss,
                                 config.student_train);
        preds.scores = distill::predict_probabilities(student, student_head, eval_corpus,
                                                      config.student_train.batch_size);
    }
    row.report = compute_metrics(preds);
    return row;
}

std::vector<AblationRow> ablation_run_all(const AblationPipelineConfig& config) {
    std::vector<AblationRow> rows;
    for (const bool eadf : {false, true}) {
        for (const bool lorckd : {false, true}) {
            rows.push_back(ablation_run({eadf, lorckd}, config));
        }
    }
    // Present as (F,F), (F,T), (T,F), (T,T).
    return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "eadf,lorckd,model,teacher_mode,acc,f1,auc,aupr,input_hash\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%s\n",
                      r.flags.eadf ? "true" : "false", r.flags.lorckd ? "true" : "false",
                      r.model.c_str(), r.teacher_mode.c_str(), r.report.accuracy,
                      r.report.macro_f1, r.report.auroc, r.report.aupr, r.input_hash.c_str());
        out << line;
    }
    return out.str();
}

} // namespace ckd::eval

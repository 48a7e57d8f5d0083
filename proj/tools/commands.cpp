#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ckd/checkpoint.hpp"
#include "ckd/distill/train.hpp"
#include "ckd/errors.hpp"
#include "ckd/eval/ablation.hpp"
#include "ckd/eval/bench.hpp"
#include "ckd/eval/metrics.hpp"
#include "ckd/fusion/render.hpp"
#include "ckd/fusion/synthetic.hpp"
#include "ckd/version.hpp"
#include "log.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace ckd::tools {

namespace {

using Clock = std::chrono::steady_clock;

// ---- small helpers ----

std::vector<std::string> split_pipe(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '|') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw io_error("failed writing " + path.string());
    }
}

void require_input(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) {
        throw missing_artifact_error(what + " not found: " + path.string());
    }
}

fs::path config_path(const KeyValueConfig& config, const std::string& key) {
    return fs::path(config.require_string(key));
}

fusion::PhenotypeRegistry load_registry(const KeyValueConfig& config, RunManifest& manifest) {
    if (config.has("paths.registry")) {
        const auto path = config_path(config, "paths.registry");
        require_input(path, "registry file");
        manifest.input_hashes[path.string()] = hash_file(path);
        return fusion::PhenotypeRegistry::load(path);
    }
    return fusion::PhenotypeRegistry::builtin();
}

fusion::SampleTemplate load_template(const KeyValueConfig& config, RunManifest& manifest) {
    if (config.has("paths.template")) {
        const auto path = config_path(config, "paths.template");
        require_input(path, "template file");
        manifest.input_hashes[path.string()] = hash_file(path);
        return fusion::SampleTemplate::load(path);
    }
    return fusion::SampleTemplate::builtin();
}

// ---- config -> domain structs ----

fusion::CohortSpec cohort_spec_from(const KeyValueConfig& config) {
    fusion::CohortSpec spec;
    spec.seed = config.get_uint("seed", 42);
    spec.n_patients = config.get_uint("synth.n_patients", 100);
    spec.visits_min = config.get_uint("synth.visits_min", 2);
    spec.visits_max = config.get_uint("synth.visits_max", 4);
    spec.baseline_resolve_prob = config.get_double("synth.baseline_resolve_prob", 0.2);
    spec.new_disease_prob = config.get_double("synth.new_disease_prob", 0.02);
    spec.initial_diagnoses_min = config.get_uint("synth.initial_diagnoses_min", 1);
    spec.initial_diagnoses_max = config.get_uint("synth.initial_diagnoses_max", 3);
    spec.treat_prob = config.get_double("synth.treat_prob", 0.9);
    spec.extra_treatment_prob = config.get_double("synth.extra_treatment_prob", 0.5);
    spec.n_aux_medications = config.get_uint("synth.aux_medications", 10);
    spec.n_aux_procedures = config.get_uint("synth.aux_procedures", 5);
    const auto planted_entries = config.indexed_values("synth.planted");
    if (planted_entries.empty()) {
        spec.planted = fusion::demo_planted_efficacy();
    } else {
        for (const auto& entry : planted_entries) {
            const auto parts = split_pipe(entry);
            if (parts.size() != 4) {
                throw config_error("planted entry must be disease|kind|code|prob, got: " + entry);
            }
            fusion::PlantedEfficacy p;
            p.disease = parts[0];
            p.treatment.kind = fusion::treatment_kind_from_string(parts[1]);
            p.treatment.code = parts[2];
            try {
                p.resolve_prob = std::stod(parts[3]);
            } catch (const std::exception&) {
                throw config_error("planted probability is not a number: " + parts[3]);
            }
            spec.planted.push_back(std::move(p));
        }
    }
    return spec;
}

model::EncoderConfig encoder_config_from(const KeyValueConfig& config, const std::string& prefix,
                                         const model::EncoderConfig& defaults) {
    model::EncoderConfig c = defaults;
    c.layers = config.get_uint(prefix + ".layers", c.layers);
    c.heads = config.get_uint(prefix + ".heads", c.heads);
    c.d_model = config.get_uint(prefix + ".d_model", c.d_model);
    c.d_ff = config.get_uint(prefix + ".d_ff", c.d_ff);
    c.max_seq_len = config.get_uint(prefix + ".max_seq_len", c.max_seq_len);
    c.causal = config.get_bool(prefix + ".causal", c.causal);
    return c;
}

distill::TrainOptions train_options_from(const KeyValueConfig& config, const std::string& prefix,
                                         std::size_t default_epochs, double default_lr) {
    distill::TrainOptions o;
    o.epochs = config.get_uint(prefix + ".epochs", default_epochs);
    o.batch_size = config.get_uint(prefix + ".batch_size", 32);
    o.lr = config.get_double(prefix + ".lr", default_lr);
    o.seed = config.get_uint("seed", 42);
    return o;
}

distill::LossConfig loss_config_from(const KeyValueConfig& config) {
    distill::LossConfig loss;
    loss.alpha = config.get_double("loss.alpha", 0.9);
    loss.label_weights = config.get_double_list("loss.label_weights", {});
    loss.validate();
    return loss;
}

// ---- model bundle (checkpoint + config + vocabulary) ----

struct ModelBundle {
    model::Encoder encoder;
    model::Mlaph head;
    model::Vocabulary vocab;
    std::size_t lora_rank = 0;
};

void save_bundle(const fs::path& dir, const std::string& role, const ModelBundle& bundle,
                 RunManifest& manifest) {
    auto tensors = bundle.encoder.named_parameters();
    for (auto& nt : bundle.head.named_parameters()) {
        tensors.push_back(nt);
    }
    const fs::path ckpt = dir / (role + ".ckpt");
    save_checkpoint(ckpt, tensors);
    manifest.output_hashes[ckpt.filename().string()] = hash_file(ckpt);

    const auto& c = bundle.encoder.config();
    KeyValueConfig mc;
    mc.set("model.role", role);
    mc.set("model.layers", std::to_string(c.layers));
    mc.set("model.heads", std::to_string(c.heads));
    mc.set("model.d_model", std::to_string(c.d_model));
    mc.set("model.d_ff", std::to_string(c.d_ff));
    mc.set("model.max_seq_len", std::to_string(c.max_seq_len));
    mc.set("model.vocab_size", std::to_string(c.vocab_size));
    mc.set("model.num_labels", std::to_string(c.num_labels));
    mc.set("model.causal", c.causal ? "true" : "false");
    mc.set("model.pooling", model::to_string(bundle.head.pooling));
    mc.set("model.lora_rank", std::to_string(bundle.lora_rank));
    const fs::path cfg_path = dir / (role + ".config");
    write_text_file(cfg_path, mc.serialize());
    manifest.output_hashes[cfg_path.filename().string()] = hash_file(cfg_path);

    const fs::path vocab_path = dir / "vocab.txt";
    bundle.vocab.save(vocab_path);
    manifest.output_hashes[vocab_path.filename().string()] = hash_file(vocab_path);
}

ModelBundle load_bundle(const fs::path& dir, const std::string& role, RunManifest& manifest) {
    const fs::path ckpt = dir / (role + ".ckpt");
    const fs::path cfg_path = dir / (role + ".config");
    const fs::path vocab_path = dir / "vocab.txt";
    require_input(ckpt, role + " checkpoint");
    require_input(cfg_path, role + " model config");
    require_input(vocab_path, role + " vocabulary");
    manifest.input_hashes[ckpt.string()] = hash_file(ckpt);
    manifest.input_hashes[cfg_path.string()] = hash_file(cfg_path);
    manifest.input_hashes[vocab_path.string()] = hash_file(vocab_path);

    const auto mc = KeyValueConfig::parse_file(cfg_path);
    model::EncoderConfig c;
    c.layers = mc.get_uint("model.layers", 0);
    c.heads = mc.get_uint("model.heads", 0);
    c.d_model = mc.get_uint("model.d_model", 0);
    c.d_ff = mc.get_uint("model.d_ff", 0);
    c.max_seq_len = mc.get_uint("model.max_seq_len", 0);
    c.vocab_size = mc.get_uint("model.vocab_size", 0);
    c.num_labels = mc.get_uint("model.num_labels", 25);
    c.causal = mc.get_bool("model.causal", false);

    ModelBundle bundle;
    const auto tensors = load_checkpoint(ckpt);
    bundle.encoder = model::Encoder::from_named(c, tensors);
    bundle.head = model::Mlaph::from_named(
        model::pooling_from_string(mc.get_string("model.pooling", "last-token")), tensors);
    bundle.vocab = model::Vocabulary::load(vocab_path);
    bundle.lora_rank = mc.get_uint("model.lora_rank", 0);
    return bundle;
}

// ---- shared pipeline fragments ----

model::Vocabulary fit_vocabulary(const std::vector<fusion::FusedSample>& samples,
                                 const fusion::PhenotypeRegistry& registry) {
    std::vector<std::string> texts;
    texts.reserve(samples.size() + registry.entries().size());
    for (const auto& s : samples) {
        texts.push_back(s.text);
    }
    // Registry names always join the fit so per-label token sets exist.
    for (const auto& e : registry.entries()) {
        texts.push_back(e.name);
    }
    return model::Vocabulary::fit(texts);
}

void write_training_log(const fs::path& out_dir, const distill::TrainResult& result,
                        RunManifest& manifest) {
    ordered_json log;
    log["diverged"] = result.diverged;
    log["epochs"] = ordered_json::array();
    ordered_json timing;
    timing["epochs"] = ordered_json::array();
    for (const auto& e : result.epochs) {
        log["epochs"].push_back({{"epoch", e.epoch}, {"loss", e.loss}});
        timing["epochs"].push_back({{"epoch", e.epoch}, {"wall_seconds", e.wall_seconds}});
    }
    const fs::path log_path = out_dir / "training_log.json";
    write_text_file(log_path, log.dump(2) + "\n");
    manifest.output_hashes[log_path.filename().string()] = hash_file(log_path);
    // Wall-clock lives outside the hashed data outputs.
    write_text_file(out_dir / "training_log.timing.json", timing.dump(2) + "\n");
}

std::string sample_id(const fusion::FusedSample& s) {
    return s.patient_id + ":" + std::to_string(s.visit_index);
}

void write_soft_label_cache(const fs::path& path,
                            const std::vector<fusion::FusedSample>& samples,
                            const std::vector<std::vector<double>>& soft,
                            RunManifest& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write soft-label cache: " + path.string());
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ordered_json j;
        j["sample_id"] = sample_id(samples[i]);
        j["y1"] = soft[i];
        out << j.dump() << '\n';
    }
    out.flush();
    manifest.output_hashes[path.filename().string()] = hash_file(path);
}

std::vector<fusion::FusedSample> load_samples(const KeyValueConfig& config,
                                              const std::string& key, RunManifest& manifest) {
    const auto path = config_path(config, key);
    require_input(path, "fused sample file (" + key + ")");
    manifest.input_hashes[path.string()] = hash_file(path);
    return fusion::read_fused_jsonl(path);
}

// ---- subcommands ----

void cmd_synth(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto registry = load_registry(config, manifest);
    const auto spec = cohort_spec_from(config);
    const auto records = fusion::generate_synthetic_cohort(spec, registry);
    const fs::path visits = out / "visits.csv";
    fusion::write_visits_csv(visits, records);
    manifest.output_hashes[visits.filename().string()] = hash_file(visits);

    ordered_json truth;
    truth["seed"] = spec.seed;
    truth["n_patients"] = spec.n_patients;
    truth["visits_min"] = spec.visits_min;
    truth["visits_max"] = spec.visits_max;
    truth["baseline_resolve_prob"] = spec.baseline_resolve_prob;
    truth["new_disease_prob"] = spec.new_disease_prob;
    truth["treat_prob"] = spec.treat_prob;
    truth["planted"] = ordered_json::array();
    for (const auto& p : spec.planted) {
        truth["planted"].push_back({{"disease", p.disease},
                                    {"kind", fusion::to_string(p.treatment.kind)},
                                    {"code", p.treatment.code},
                                    {"resolve_prob", p.resolve_prob}});
    }
    const fs::path truth_path = out / "ground_truth.json";
    write_text_file(truth_path, truth.dump(2) + "\n");
    manifest.output_hashes[truth_path.filename().string()] = hash_file(truth_path);
    log_info("synth: wrote " + std::to_string(records.size()) + " visits for " +
             std::to_string(spec.n_patients) + " patients");
}

void cmd_fuse(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto corpus_path = config_path(config, "paths.corpus");
    require_input(corpus_path, "cohort file");
    manifest.input_hashes[corpus_path.string()] = hash_file(corpus_path);
    const auto registry = load_registry(config, manifest);
    const auto tmpl = load_template(config, manifest);

    fusion::IngestOptions ingest_options;
    ingest_options.lenient = config.get_bool("fuse.lenient", false);
    fusion::IngestReport ingest_report;
    const auto records = fusion::ingest_records(corpus_path, ingest_options, &ingest_report);
    if (ingest_report.rows_skipped > 0) {
        log_info("fuse: skipped " + std::to_string(ingest_report.rows_skipped) +
                 " malformed rows");
    }
    const auto pairs = fusion::build_visit_pairs(records);
    if (pairs.empty()) {
        log_info("fuse: corpus yields 0 visit pairs; writing empty sample files");
    }
    const double train_fraction = config.get_double("fuse.train_fraction", 0.8);
    const auto split =
        fusion::split_pairs_by_patient(pairs, train_fraction, config.get_uint("seed", 42));
    const std::size_t min_support =
        config.get_uint("fuse.min_support", fusion::kDefaultMinSupport);
    const auto table = fusion::rank_efficacy(split.train, min_support);
    const std::size_t top_k = config.get_uint("fuse.top_k", 5);

    fusion::RenderStats stats;
    std::vector<fusion::FusedSample> train_samples, eval_samples;
    for (const auto& p : split.train) {
        train_samples.push_back(fusion::render_sample(p, table, registry, tmpl, top_k, &stats));
    }
    for (const auto& p : split.eval) {
        eval_samples.push_back(fusion::render_sample(p, table, registry, tmpl, top_k, &stats));
    }
    const fs::path train_path = out / "fused_train.jsonl";
    const fs::path eval_path = out / "fused_eval.jsonl";
    fusion::write_fused_jsonl(train_path, train_samples);
    fusion::write_fused_jsonl(eval_path, eval_samples);
    manifest.output_hashes[train_path.filename().string()] = hash_file(train_path);
    manifest.output_hashes[eval_path.filename().string()] = hash_file(eval_path);

    ordered_json dump;
    dump["min_support"] = table.min_support();
    dump["entry_count"] = table.entry_count();
    dump["entries"] = ordered_json::array();
    for (const auto& [disease, treatments] : table.entries()) {
        for (const auto& [treatment, cell] : treatments) {
            dump["entries"].push_back({{"disease", disease},
                                       {"kind", fusion::to_string(treatment.kind)},
                                       {"code", treatment.code},
                                       {"exposed_pairs", cell.exposed_pairs},
                                       {"resolved_pairs", cell.resolved_pairs},
                                       {"efficacy_score", fusion::efficacy_score(cell)}});
        }
    }
    const fs::path table_path = out / "efficacy_table.json";
    write_text_file(table_path, dump.dump(2) + "\n");
    manifest.output_hashes[table_path.filename().string()] = hash_file(table_path);

    ordered_json dropped;
    dropped["dropped_codes"] = ordered_json::object();
    std::size_t total_dropped = 0;
    for (const auto& [code, count] : stats.dropped_codes) {
        dropped["dropped_codes"][code] = count;
        total_dropped += count;
    }
    dropped["total"] = total_dropped;
    const fs::path dropped_path = out / "dropped_codes.json";
    write_text_file(dropped_path, dropped.dump(2) + "\n");
    manifest.output_hashes[dropped_path.filename().string()] = hash_file(dropped_path);
    log_info("fuse: " + std::to_string(train_samples.size()) + " train / " +
             std::to_string(eval_samples.size()) + " eval samples, " +
             std::to_string(table.entry_count()) + " efficacy entries");
}

void cmd_train_teacher(const KeyValueConfig& config, const fs::path& out,
                       RunManifest& manifest) {
    const auto registry = load_registry(config, manifest);
    const auto samples = load_samples(config, "paths.fused_train", manifest);
    if (samples.empty()) {
        throw missing_artifact_error("fused training corpus is empty");
    }
    ModelBundle bundle;
    bundle.vocab = fit_vocabulary(samples, registry);
    auto teacher_config =
        encoder_config_from(config, "teacher", model::EncoderConfig::teacher_defaults());
    teacher_config.vocab_size = bundle.vocab.size();
    Rng rng(config.get_uint("seed", 42));
    bundle.encoder = model::Encoder::init(teacher_config, rng);
    bundle.lora_rank = config.get_uint("lora.rank", 4);
    bundle.encoder.attach_lora(bundle.lora_rank, rng);
    bundle.head = model::Mlaph::init(
        teacher_config.d_model, teacher_config.num_labels,
        model::pooling_from_string(config.get_string("teacher.pooling", "last-token")), rng);

    const auto options = train_options_from(config, "teacher", 5, 5e-3);
    const auto corpus =
        distill::TokenizedCorpus::build(samples, bundle.vocab, teacher_config.max_seq_len);
    const auto result = distill::finetune_teacher(bundle.encoder, bundle.head, corpus, options,
                                                  config.get_double_list("loss.label_weights", {}));
    save_bundle(out, "teacher", bundle, manifest);
    write_training_log(out, result, manifest);
    if (result.diverged) {
        throw divergence_error("teacher training diverged; last good checkpoint saved to " +
                               out.string());
    }
    log_info("train-teacher: " + std::to_string(result.epochs.size()) + " epochs, final loss " +
             (result.epochs.empty() ? std::string("n/a")
                                    : std::to_string(result.epochs.back().loss)));
}

void cmd_distill(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto registry = load_registry(config, manifest);
    const auto samples = load_samples(config, "paths.fused_train", manifest);
    const auto teacher_dir = config_path(config, "paths.teacher_dir");
    const auto teacher = load_bundle(teacher_dir, "teacher", manifest);
    const auto loss = loss_config_from(config);
    const auto strategy =
        distill::strategy_from_string(config.get_string("strategy", "mlaph"));

    const auto max_seq_len = teacher.encoder.config().max_seq_len;
    const auto corpus = distill::TokenizedCorpus::build(samples, teacher.vocab, max_seq_len);

    std::vector<std::vector<double>> soft;
    if (loss.alpha < 1.0) {
        const std::size_t batch = config.get_uint("student.batch_size", 32);
        if (strategy == distill::SoftLabelStrategy::single_cls_prob) {
            const auto split_options = train_options_from(config, "teacher", 5, 5e-3);
            const auto single = distill::finetune_single_cls(
                teacher.encoder, std::max<std::size_t>(teacher.lora_rank, 1), samples,
                teacher.vocab, max_seq_len, split_options);
            soft = distill::extract_soft_labels(strategy, teacher.encoder, teacher.head, samples,
                                                teacher.vocab, registry, max_seq_len, batch,
                                                &single);
        } else {
            soft = distill::extract_soft_labels(strategy, teacher.encoder, teacher.head, samples,
                                                teacher.vocab, registry, max_seq_len, batch);
        }
        write_soft_label_cache(out / "soft_labels.jsonl", samples, soft, manifest);
    } else {
        log_info("distill: alpha = 1, soft labels unused and not extracted");
    }

    ModelBundle student;
    student.vocab = teacher.vocab;
    auto student_config =
        encoder_config_from(config, "student", model::EncoderConfig::student_defaults());
    student_config.vocab_size = student.vocab.size();
    student_config.max_seq_len = max_seq_len;
    Rng rng(config.get_uint("seed", 42));
    student.encoder = model::Encoder::init(student_config, rng);
    student.head = model::Mlaph::init(
        student_config.d_model, student_config.num_labels,
        model::pooling_from_string(config.get_string("student.pooling", "last-token")), rng);

    const auto options = train_options_from(config, "student", 10, 2e-3);
    const auto result =
        distill::distill_student(student.encoder, student.head, corpus, soft, loss, options);
    save_bundle(out, "student", student, manifest);
    write_training_log(out, result, manifest);
    if (result.diverged) {
        throw divergence_error("student training diverged; last good checkpoint saved to " +
                               out.string());
    }
    log_info("distill: alpha " + std::to_string(loss.alpha) + ", " +
             std::to_string(result.epochs.size()) + " epochs");
}

void cmd_eval(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto registry = load_registry(config, manifest);
    const auto samples = load_samples(config, "paths.fused_eval", manifest);
    if (samples.empty()) {
        throw missing_artifact_error("evaluation corpus is empty");
    }
    const std::string role = config.get_string("eval.model", "student");
    const auto bundle = load_bundle(config_path(config, "eval.model_dir"), role, manifest);
    const auto corpus =
        distill::TokenizedCorpus::build(samples, bundle.vocab, bundle.encoder.config().max_seq_len);
    eval::PredictionSet preds;
    preds.truths = corpus.labels;
    preds.scores = distill::predict_probabilities(bundle.encoder, bundle.head, corpus,
                                                  config.get_uint("eval.batch_size", 32));
    preds.threshold = config.get_double("eval.threshold", 0.5);
    const auto report = eval::compute_metrics(preds);
    std::vector<std::string> names;
    for (const auto& e : registry.entries()) {
        names.push_back(e.name);
    }
    const fs::path json_path = out / "metrics.json";
    write_text_file(json_path, eval::metric_report_json(report, names));
    manifest.output_hashes[json_path.filename().string()] = hash_file(json_path);
    const fs::path table_path = out / "metrics.txt";
    write_text_file(table_path, eval::metric_report_table(report, names));
    manifest.output_hashes[table_path.filename().string()] = hash_file(table_path);
    const fs::path confusion_path = out / "confusion.csv";
    eval::write_confusion_csv(confusion_path, report, names);
    manifest.output_hashes[confusion_path.filename().string()] = hash_file(confusion_path);
    log_info("eval: acc " + std::to_string(report.accuracy) + ", macro-f1 " +
             std::to_string(report.macro_f1));
}

void cmd_sweep_alpha(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto registry = load_registry(config, manifest);
    const auto train_samples = load_samples(config, "paths.fused_train", manifest);
    const auto eval_samples = load_samples(config, "paths.fused_eval", manifest);
    const auto teacher = load_bundle(config_path(config, "paths.teacher_dir"), "teacher",
                                     manifest);
    const auto max_seq_len = teacher.encoder.config().max_seq_len;
    const auto train_corpus =
        distill::TokenizedCorpus::build(train_samples, teacher.vocab, max_seq_len);
    const auto eval_corpus =
        distill::TokenizedCorpus::build(eval_samples, teacher.vocab, max_seq_len);
    const auto strategy =
        distill::strategy_from_string(config.get_string("strategy", "mlaph"));
    const auto soft = distill::extract_soft_labels(
        strategy, teacher.encoder, teacher.head, train_samples, teacher.vocab, registry,
        max_seq_len, config.get_uint("student.batch_size", 32));

    distill::SweepInputs inputs;
    inputs.train = &train_corpus;
    inputs.soft_labels = &soft;
    inputs.eval = &eval_corpus;
    inputs.student_config =
        encoder_config_from(config, "student", model::EncoderConfig::student_defaults());
    inputs.student_config.vocab_size = teacher.vocab.size();
    inputs.student_config.max_seq_len = max_seq_len;
    inputs.pooling =
        model::pooling_from_string(config.get_string("student.pooling", "last-token"));
    inputs.train_options = train_options_from(config, "student", 10, 2e-3);
    inputs.label_weights = config.get_double_list("loss.label_weights", {});
    inputs.max_workers = config.get_uint("sweep.workers", 2);
    const auto alphas = config.get_double_list("sweep.alphas", distill::kDefaultAlphaSweep);

    const auto rows = distill::alpha_sweep(alphas, inputs);
    std::ostringstream csv;
    csv << "alpha,acc,f1,auc,aupr\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%.2f,%.6f,%.6f,%.6f,%.6f\n", r.alpha, r.acc,
                      r.macro_f1, r.auroc, r.aupr);
        csv << line;
    }
    const fs::path csv_path = out / "alpha_sweep.csv";
    write_text_file(csv_path, csv.str());
    manifest.output_hashes[csv_path.filename().string()] = hash_file(csv_path);
    log_info("sweep-alpha: " + std::to_string(rows.size()) + " rows");
}

void cmd_bench(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto teacher = load_bundle(config_path(config, "paths.teacher_dir"), "teacher",
                                     manifest);
    const auto student = load_bundle(config_path(config, "paths.student_dir"), "student",
                                     manifest);
    const auto samples = load_samples(config, "paths.fused_eval", manifest);
    if (samples.empty()) {
        throw missing_artifact_error("bench needs at least one sample");
    }
    const std::size_t n_texts = std::min<std::size_t>(samples.size(),
                                                      config.get_uint("bench.samples", 8));
    const std::size_t repeats = config.get_uint("bench.repeats", 50);
    const std::size_t warmup = config.get_uint("bench.warmup", 5);

    auto tokenize_for = [&](const ModelBundle& bundle) {
        std::vector<model::TokenizedText> rows;
        for (std::size_t i = 0; i < n_texts; ++i) {
            rows.push_back(model::tokenize(samples[i].text, bundle.vocab,
                                           bundle.encoder.config().max_seq_len));
        }
        return rows;
    };
    auto teacher_result = eval::bench_inference("teacher", teacher.encoder, teacher.head,
                                                tokenize_for(teacher), repeats, warmup);
    auto student_result = eval::bench_inference("student", student.encoder, student.head,
                                                tokenize_for(student), repeats, warmup);
    eval::apply_reference(student_result, teacher_result);
    // Latency measurements are inherently wall-clock; the report is a timing
    // artifact and stays out of the reproducibility hashes.
    write_text_file(out / "bench.json",
                    eval::bench_report_json({teacher_result, student_result},
                                            eval::BenchEnvironment::capture()));
    log_info("bench: student speedup x" + std::to_string(student_result.speedup));
}

void cmd_ablate(const KeyValueConfig& config, const fs::path& out, RunManifest& manifest) {
    const auto corpus_path = config_path(config, "paths.corpus");
    require_input(corpus_path, "cohort file");
    manifest.input_hashes[corpus_path.string()] = hash_file(corpus_path);
    const auto registry = load_registry(config, manifest);
    const auto records = fusion::ingest_records(corpus_path);

    eval::AblationPipelineConfig pipeline;
    pipeline.records = &records;
    pipeline.registry = &registry;
    if (config.has("paths.template")) {
        pipeline.template_text = fusion::SampleTemplate::load(
                                     config_path(config, "paths.template"))
                                     .text();
    }
    pipeline.train_fraction = config.get_double("fuse.train_fraction", 0.8);
    pipeline.seed = config.get_uint("seed", 42);
    pipeline.teacher_config =
        encoder_config_from(config, "teacher", model::EncoderConfig::teacher_defaults());
    pipeline.student_config =
        encoder_config_from(config, "student", model::EncoderConfig::student_defaults());
    pipeline.lora_rank = config.get_uint("lora.rank", 4);
    pipeline.pooling =
        model::pooling_from_string(config.get_string("teacher.pooling", "last-token"));
    pipeline.teacher_train = train_options_from(config, "teacher", 5, 5e-3);
    pipeline.student_train = train_options_from(config, "student", 10, 2e-3);
    pipeline.loss = loss_config_from(config);
    pipeline.strategy = distill::strategy_from_string(config.get_string("strategy", "mlaph"));
    pipeline.finetune_teacher = config.get_bool("ablation.finetune_teacher", true);
    pipeline.top_k = config.get_uint("fuse.top_k", 5);

    const auto rows = eval::ablation_run_all(pipeline);
    const fs::path csv_path = out / "ablation.csv";
    write_text_file(csv_path, eval::ablation_table_csv(rows));
    manifest.output_hashes[csv_path.filename().string()] = hash_file(csv_path);
    log_info("ablate: wrote " + std::to_string(rows.size()) + " rows");
}

} // namespace

RunManifest run_command(const std::string& name, const KeyValueConfig& config,
                        const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw io_error("cannot create output directory: " + out_dir.string());
    }
    RunManifest manifest;
    manifest.command = name;
    manifest.version = kVersion;
    manifest.seed = config.get_uint("seed", 42);
    manifest.config = config.values();

    const auto started = Clock::now();
    if (name == "synth") {
        cmd_synth(config, out_dir, manifest);
    } else if (name == "fuse") {
        cmd_fuse(config, out_dir, manifest);
    } else if (name == "train-teacher") {
        cmd_train_teacher(config, out_dir, manifest);
    } else if (name == "distill") {
        cmd_distill(config, out_dir, manifest);
    } else if (name == "eval") {
        cmd_eval(config, out_dir, manifest);
    } else if (name == "sweep-alpha") {
        cmd_sweep_alpha(config, out_dir, manifest);
    } else if (name == "bench") {
        cmd_bench(config, out_dir, manifest);
    } else if (name == "ablate") {
        cmd_ablate(config, out_dir, manifest);
    } else {
        throw config_error("unknown subcommand: " + name);
    }

    ordered_json timing;
    timing["command"] = name;
    timing["wall_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
    write_text_file(out_dir / (name + ".timing.json"), timing.dump(2) + "\n");

    const fs::path manifest_path = out_dir / (name + "_manifest.json");
    manifest.save(manifest_path);
    return manifest;
}

bool replay_manifest(const fs::path& manifest_path, const fs::path& replay_dir,
                     std::string* report) {
    const auto manifest = RunManifest::load(manifest_path);
    const auto replayed = run_command(manifest.command, manifest.config_as_kv(), replay_dir);
    std::ostringstream out;
    bool ok = true;
    for (const auto& [file, hash] : manifest.output_hashes) {
        const auto it = replayed.output_hashes.find(file);
        if (it == replayed.output_hashes.end()) {
            out << "missing output: " << file << "\n";
            ok = false;
        } else if (it->second != hash) {
            out << "hash mismatch: " << file << " recorded " << hash << " replayed "
                << it->second << "\n";
            ok = false;
        } else {
            out << "match: " << file << " " << hash << "\n";
        }
    }
    for (const auto& [file, hash] : replayed.output_hashes) {
        if (!manifest.output_hashes.count(file)) {
            out << "extra output: " << file << "\n";
            ok = false;
        }
    }
    if (report) {
        *report = out.str();
    }
    return ok;
}

} // namespace ckd::tools

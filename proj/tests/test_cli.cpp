#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "ckd/fusion/records.hpp"
#include "ckd/fusion/render.hpp"
#include "ckd/manifest.hpp"
#include "support/test_util.hpp"

namespace fs = std::filesystem;
using ckd::testsupport::TempDir;
using ckd::testsupport::read_file;
using ckd::testsupport::write_file;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(CKD_CLI_PATH) + " " + args + " >" + log.string() +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

// Small but trainable pipeline settings shared across the CLI tests.
const char* kTinyModel =
    " --set teacher.layers=1 teacher.d_model=16 teacher.d_ff=32 teacher.heads=2"
    " teacher.max_seq_len=48 teacher.epochs=1 teacher.batch_size=16"
    " student.layers=1 student.d_model=8 student.d_ff=16 student.heads=2"
    " student.epochs=1 student.batch_size=16 lora.rank=2";

} // namespace

TEST_CASE("synth is deterministic and writes the ground-truth sidecar") {
    TempDir dir("cli_synth");
    const auto log = dir.path() / "log.txt";
    const std::string base =
        "synth --seed 42 --set synth.n_patients=10 synth.visits_min=2 synth.visits_max=4";
    CHECK(run_cli(base + " --out " + (dir.path() / "a").string(), log) == 0);
    CHECK(run_cli(base + " --out " + (dir.path() / "b").string(), log) == 0);
    const auto visits_a = read_file(dir.path() / "a" / "visits.csv");
    CHECK(visits_a == read_file(dir.path() / "b" / "visits.csv"));
    CHECK(!visits_a.empty());

    // 10 patients x 2..4 visits: row count within [20, 40] (+1 header line).
    const auto lines = std::count(visits_a.begin(), visits_a.end(), '\n');
    CHECK(lines >= 21);
    CHECK(lines <= 41);

    const auto truth = read_file(dir.path() / "a" / "ground_truth.json");
    CHECK(truth.find("resolve_prob") != std::string::npos);
    CHECK(truth.find("planted") != std::string::npos);
    CHECK(fs::exists(dir.path() / "a" / "synth_manifest.json"));
}

TEST_CASE("fuse produces samples, efficacy dump, and dropped-code report") {
    TempDir dir("cli_fuse");
    const auto log = dir.path() / "log.txt";
    REQUIRE(run_cli("synth --seed 7 --set synth.n_patients=30 --out " +
                        (dir.path() / "synth").string(),
                    log) == 0);
    const auto corpus = (dir.path() / "synth" / "visits.csv").string();
    REQUIRE(run_cli("fuse --seed 7 --set paths.corpus=" + corpus + " --out " +
                        (dir.path() / "fuse").string(),
                    log) == 0);
    const auto train = ckd::fusion::read_fused_jsonl(dir.path() / "fuse" / "fused_train.jsonl");
    const auto eval = ckd::fusion::read_fused_jsonl(dir.path() / "fuse" / "fused_eval.jsonl");
    const auto records = ckd::fusion::ingest_records(dir.path() / "synth" / "visits.csv");
    const auto pairs = ckd::fusion::build_visit_pairs(records);
    CHECK(train.size() + eval.size() == pairs.size());
    CHECK(!train.empty());
    CHECK(fs::exists(dir.path() / "fuse" / "efficacy_table.json"));
    CHECK(fs::exists(dir.path() / "fuse" / "dropped_codes.json"));

    // Efficacy dump row count equals the distinct (disease, treatment)
    // co-occurrences of the training split.
    const auto dump = read_file(dir.path() / "fuse" / "efficacy_table.json");
    const auto train_pairs_entry_count = [&] {
        std::size_t count = 0;
        std::size_t pos = 0;
        while ((pos = dump.find("\"disease\"", pos)) != std::string::npos) {
            ++count;
            pos += 9;
        }
        return count;
    }();
    const auto split = ckd::fusion::split_pairs_by_patient(pairs, 0.8, 7);
    const auto table = ckd::fusion::rank_efficacy(split.train);
    CHECK(train_pairs_entry_count == table.entry_count());
}

TEST_CASE("fuse on a single-visit cohort emits zero samples and succeeds") {
    TempDir dir("cli_single");
    const auto log = dir.path() / "log.txt";
    write_file(dir.path() / "visits.csv",
               "patient_id,visit_time,diagnosis_codes,medication_codes,procedure_codes\n"
               "A,0,Pneumonia,med_a,\n"
               "B,0,Shock,,proc_a\n");
    CHECK(run_cli("fuse --set paths.corpus=" + (dir.path() / "visits.csv").string() +
                      " --out " + (dir.path() / "fuse").string(),
                  log) == 0);
    CHECK(read_file(dir.path() / "fuse" / "fused_train.jsonl").empty());
}

TEST_CASE("exit codes: schema errors 2, missing artifacts 3") {
    TempDir dir("cli_exits");
    const auto log = dir.path() / "log.txt";
    write_file(dir.path() / "bad.csv", "patient_id,visit_time,diagnosis_codes\nA,0,X\n");
    CHECK(run_cli("fuse --set paths.corpus=" + (dir.path() / "bad.csv").string() + " --out " +
                      (dir.path() / "f").string(),
                  log) == 2);
    CHECK(read_file(log).find("medication_codes") != std::string::npos);

    CHECK(run_cli("fuse --set paths.corpus=" + (dir.path() / "nonexistent.csv").string() +
                      " --out " + (dir.path() / "g").string(),
                  log) == 3);
    CHECK(run_cli("distill --set paths.fused_train=" +
                      (dir.path() / "nope.jsonl").string() +
                      " paths.teacher_dir=" + dir.path().string() + " --out " +
                      (dir.path() / "h").string(),
                  log) == 3);
    CHECK(run_cli("eval --set paths.fused_eval=missing.jsonl eval.model_dir=" +
                      dir.path().string() + " --out " + (dir.path() / "i").string(),
                  log) == 3);

    // Config errors are input errors too.
    CHECK(run_cli("synth --alpha 3.0 --set synth.baseline_resolve_prob=2.0 --out " +
                      (dir.path() / "j").string(),
                  log) == 2);
}

TEST_CASE("full pipeline: train, distill, eval, replay") {
    TempDir dir("cli_pipeline");
    const auto log = dir.path() / "log.txt";
    REQUIRE(run_cli("synth --seed 11 --set synth.n_patients=24 --out " +
                        (dir.path() / "synth").string(),
                    log) == 0);
    REQUIRE(run_cli("fuse --seed 11 --set paths.corpus=" +
                        (dir.path() / "synth" / "visits.csv").string() + " --out " +
                        (dir.path() / "fuse").string(),
                    log) == 0);
    const std::string fused_train =
        " --set paths.fused_train=" + (dir.path() / "fuse" / "fused_train.jsonl").string();

    REQUIRE(run_cli("train-teacher --seed 11" + fused_train + kTinyModel + " --out " +
                        (dir.path() / "teacher").string(),
                    log) == 0);
    CHECK(fs::exists(dir.path() / "teacher" / "teacher.ckpt"));
    CHECK(fs::exists(dir.path() / "teacher" / "vocab.txt"));
    CHECK(fs::exists(dir.path() / "teacher" / "training_log.json"));
    CHECK(fs::exists(dir.path() / "teacher" / "training_log.timing.json"));

    // alpha = 1: the soft cache is neither needed nor written, and two runs
    // (with and without a prior cache) give identical student checkpoints.
    const std::string distill_base = "distill --seed 11" + fused_train + kTinyModel +
                                     " --set paths.teacher_dir=" +
                                     (dir.path() / "teacher").string();
    REQUIRE(run_cli(distill_base + " --alpha 1.0 --out " + (dir.path() / "d1").string(), log) ==
            0);
    CHECK(!fs::exists(dir.path() / "d1" / "soft_labels.jsonl"));
    REQUIRE(run_cli(distill_base + " --alpha 1.0 --out " + (dir.path() / "d2").string(), log) ==
            0);
    CHECK(read_file(dir.path() / "d1" / "student.ckpt") ==
          read_file(dir.path() / "d2" / "student.ckpt"));

    // alpha < 1 writes the cache.
    REQUIRE(run_cli(distill_base + " --alpha 0.9 --out " + (dir.path() / "d3").string(), log) ==
            0);
    CHECK(fs::exists(dir.path() / "d3" / "soft_labels.jsonl"));
    const auto cache_line = read_file(dir.path() / "d3" / "soft_labels.jsonl");
    CHECK(cache_line.find("\"sample_id\"") != std::string::npos);
    CHECK(cache_line.find("\"y1\"") != std::string::npos);

    // eval twice: byte-identical reports.
    const std::string eval_base = "eval --seed 11 --set paths.fused_eval=" +
                                  (dir.path() / "fuse" / "fused_eval.jsonl").string() +
                                  " eval.model_dir=" + (dir.path() / "d3").string();
    REQUIRE(run_cli(eval_base + " --out " + (dir.path() / "e1").string(), log) == 0);
    REQUIRE(run_cli(eval_base + " --out " + (dir.path() / "e2").string(), log) == 0);
    CHECK(read_file(dir.path() / "e1" / "metrics.json") ==
          read_file(dir.path() / "e2" / "metrics.json"));
    CHECK(fs::exists(dir.path() / "e1" / "confusion.csv"));

    // Replay from the fuse manifest reproduces every output.
    CHECK(run_cli("replay --manifest " +
                      (dir.path() / "fuse" / "fuse_manifest.json").string() + " --out " +
                      (dir.path() / "replay").string(),
                  log) == 0);
    CHECK(read_file(log).find("match:") != std::string::npos);
}

TEST_CASE("sweep produces one row per alpha") {
    TempDir dir("cli_sweep");
    const auto log = dir.path() / "log.txt";
    REQUIRE(run_cli("synth --seed 3 --set synth.n_patients=20 --out " +
                        (dir.path() / "synth").string(),
                    log) == 0);
    REQUIRE(run_cli("fuse --seed 3 --set paths.corpus=" +
                        (dir.path() / "synth" / "visits.csv").string() + " --out " +
                        (dir.path() / "fuse").string(),
                    log) == 0);
    REQUIRE(run_cli("train-teacher --seed 3 --set paths.fused_train=" +
                        (dir.path() / "fuse" / "fused_train.jsonl").string() + kTinyModel +
                        " --out " + (dir.path() / "teacher").string(),
                    log) == 0);
    REQUIRE(run_cli("sweep-alpha --seed 3" + std::string(kTinyModel) +
                        " --set paths.fused_train=" +
                        (dir.path() / "fuse" / "fused_train.jsonl").string() +
                        " paths.fused_eval=" +
                        (dir.path() / "fuse" / "fused_eval.jsonl").string() +
                        " paths.teacher_dir=" + (dir.path() / "teacher").string() +
                        " sweep.alphas=0.8,0.9,1.0 --out " + (dir.path() / "sweep").string(),
                    log) == 0);
    const auto csv = read_file(dir.path() / "sweep" / "alpha_sweep.csv");
    CHECK(csv.rfind("alpha,acc,f1,auc,aupr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 3 rows
    CHECK(csv.find("0.80,") != std::string::npos);
    CHECK(csv.find("1.00,") != std::string::npos);
}

TEST_CASE("config file parsing with flag overrides") {
    TempDir dir("cli_config");
    const auto log = dir.path() / "log.txt";
    write_file(dir.path() / "run.conf",
               "# comment line\n"
               "seed = 5\n"
               "synth.n_patients = 12\n");
    REQUIRE(run_cli("synth --config " + (dir.path() / "run.conf").string() + " --out " +
                        (dir.path() / "a").string(),
                    log) == 0);
    // Flag override wins over the file.
    REQUIRE(run_cli("synth --config " + (dir.path() / "run.conf").string() +
                        " --seed 6 --out " + (dir.path() / "b").string(),
                    log) == 0);
    CHECK(read_file(dir.path() / "a" / "visits.csv") !=
          read_file(dir.path() / "b" / "visits.csv"));
    const auto manifest = ckd::RunManifest::load(dir.path() / "b" / "synth_manifest.json");
    CHECK(manifest.seed == 6);
    CHECK(manifest.command == "synth");
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "ckd/errors.hpp"
#include "ckd/fusion/efficacy.hpp"
#include "ckd/fusion/records.hpp"
#include "ckd/fusion/render.hpp"
#include "ckd/fusion/synthetic.hpp"
#include "support/test_util.hpp"

using namespace ckd;
using namespace ckd::fusion;

namespace {

VisitRecord make_visit(std::string pid, std::int64_t t, std::vector<std::string> dx,
                       std::vector<std::string> meds = {},
                       std::vector<std::string> procs = {}) {
    VisitRecord r;
    r.patient_id = std::move(pid);
    r.visit_time = t;
    r.diagnoses = normalize_codes(std::move(dx));
    r.medications = normalize_codes(std::move(meds));
    r.procedures = normalize_codes(std::move(procs));
    return r;
}

// Independent O(records^2) pairing oracle: consecutive same-patient visits.
std::vector<std::pair<std::int64_t, std::int64_t>>
brute_force_pairs(const std::vector<VisitRecord>& records, const std::string& pid) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (const auto& a : records) {
        if (a.patient_id != pid) {
            continue;
        }
        for (const auto& b : records) {
            if (b.patient_id != pid || b.visit_time <= a.visit_time) {
                continue;
            }
            bool intervening = false;
            for (const auto& c : records) {
                if (c.patient_id == pid && c.visit_time > a.visit_time &&
                    c.visit_time < b.visit_time) {
                    intervening = true;
                    break;
                }
            }
            if (!intervening) {
                out.emplace_back(a.visit_time, b.visit_time);
            }
        }
    }
    return out;
}

// Independent O(pairs x diseases x treatments) efficacy recount.
std::map<std::pair<std::string, TreatmentRef>, EfficacyCell>
brute_force_efficacy(const std::vector<VisitPair>& pairs) {
    std::set<std::string> diseases;
    std::set<TreatmentRef> treatments;
    for (const auto& p : pairs) {
        for (const auto& d : p.source.diagnoses) {
            diseases.insert(d);
        }
        for (const auto& m : p.source.medications) {
            treatments.insert({TreatmentKind::medication, m});
        }
        for (const auto& pr : p.source.procedures) {
            treatments.insert({TreatmentKind::procedure, pr});
        }
    }
    std::map<std::pair<std::string, TreatmentRef>, EfficacyCell> cells;
    for (const auto& d : diseases) {
        for (const auto& t : treatments) {
            EfficacyCell cell;
            for (const auto& p : pairs) {
                const auto& src = p.source;
                const bool has_disease =
                    std::find(src.diagnoses.begin(), src.diagnoses.end(), d) !=
                    src.diagnoses.end();
                const auto& pool = t.kind == TreatmentKind::medication ? src.medications
                                                                       : src.procedures;
                const bool has_treatment =
                    std::find(pool.begin(), pool.end(), t.code) != pool.end();
                if (!has_disease || !has_treatment) {
                    continue;
                }
                ++cell.exposed_pairs;
                if (std::find(p.next_diagnoses.begin(), p.next_diagnoses.end(), d) ==
                    p.next_diagnoses.end()) {
                    ++cell.resolved_pairs;
                }
            }
            if (cell.exposed_pairs > 0) {
                cells[{d, t}] = cell;
            }
        }
    }
    return cells;
}

} // namespace

TEST_CASE("builtin registry holds 25 unique phenotypes in label order") {
    const auto registry = PhenotypeRegistry::builtin();
    CHECK(registry.entries().size() == 25);
    CHECK(registry.index_of("Pneumonia") == 21);
    CHECK(registry.index_of("Shock") == 24);
    CHECK(registry.index_of("Acute and unspecified renal failure") == 0);
    CHECK(!registry.index_of("Not a phenotype"));

    testsupport::TempDir dir("registry");
    const auto path = dir.path() / "phenotypes.tsv";
    registry.save(path);
    const auto loaded = PhenotypeRegistry::load(path);
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(loaded.name(i) == registry.name(i));
        CHECK(loaded.entries()[i].type == registry.entries()[i].type);
    }
}

TEST_CASE("ingest: empty file with valid header yields an empty list") {
    testsupport::TempDir dir("ingest_empty");
    const auto path = dir.path() / "visits.csv";
    testsupport::write_file(
        path, "patient_id,visit_time,diagnosis_codes,medication_codes,procedure_codes\n");
    IngestReport report;
    const auto records = ingest_records(path, {}, &report);
    CHECK(records.empty());
    CHECK(report.rows_read == 0);
}

TEST_CASE("ingest: records come back grouped per patient and time-sorted") {
    testsupport::TempDir dir("ingest_sorted");
    const auto path = dir.path() / "visits.csv";
    testsupport::write_file(path,
                            "patient_id,visit_time,diagnosis_codes,medication_codes,"
                            "procedure_codes\n"
                            "B,2,Pneumonia,,\n"
                            "A,1,Shock,med_a|med_b,proc_a\n"
                            "B,0,Pneumonia|Shock,,\n"
                            "A,0,Shock,,\n"
                            "B,1,,,\n"
                            "A,2,,,\n");
    const auto records = ingest_records(path);
    REQUIRE(records.size() == 6);
    CHECK(records[0].patient_id == "A");
    CHECK(records[0].visit_time == 0);
    CHECK(records[2].visit_time == 2);
    CHECK(records[3].patient_id == "B");
    CHECK(records[1].medications == std::vector<std::string>{"med_a", "med_b"});
    CHECK(records[4].diagnoses.empty());
}

TEST_CASE("ingest: duplicate (patient, time) is an error naming the key") {
    testsupport::TempDir dir("ingest_dup");
    const auto path = dir.path() / "visits.csv";
    testsupport::write_file(path,
                            "patient_id,visit_time,diagnosis_codes,medication_codes,"
                            "procedure_codes\n"
                            "A,5,Pneumonia,,\n"
                            "A,5,Shock,,\n");
    try {
        ingest_records(path);
        FAIL("expected schema_error");
    } catch (const schema_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("patient_id=A") != std::string::npos);
        CHECK(msg.find("visit_time=5") != std::string::npos);
    }
}

TEST_CASE("ingest: missing column and bad timestamps") {
    testsupport::TempDir dir("ingest_bad");
    const auto no_col = dir.path() / "no_col.csv";
    testsupport::write_file(no_col, "patient_id,visit_time,diagnosis_codes,medication_codes\n");
    try {
        ingest_records(no_col);
        FAIL("expected schema_error");
    } catch (const schema_error& e) {
        CHECK(std::string(e.what()).find("procedure_codes") != std::string::npos);
    }

    const auto bad_time = dir.path() / "bad_time.csv";
    testsupport::write_file(bad_time,
                            "patient_id,visit_time,diagnosis_codes,medication_codes,"
                            "procedure_codes\n"
                            "A,notatime,Pneumonia,,\n"
                            "A,1,Shock,,\n");
    CHECK_THROWS_AS(ingest_records(bad_time), schema_error);
    IngestOptions lenient;
    lenient.lenient = true;
    IngestReport report;
    const auto records = ingest_records(bad_time, lenient, &report);
    CHECK(records.size() == 1);
    CHECK(report.rows_skipped == 1);
    CHECK(report.skipped_details.size() == 1);
}

TEST_CASE("visit pairs: counts and consecutiveness") {
    // Single-visit patient contributes nothing.
    std::vector<VisitRecord> single = {make_visit("A", 0, {"Pneumonia"})};
    CHECK(build_visit_pairs(single).empty());

    // Four visits make exactly three pairs with consecutive indices.
    std::vector<VisitRecord> four;
    for (int i = 0; i < 4; ++i) {
        four.push_back(make_visit("A", i, {"Pneumonia"}));
    }
    const auto pairs = build_visit_pairs(four);
    REQUIRE(pairs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(pairs[i].visit_index == i);
        CHECK(pairs[i].source.visit_time == static_cast<std::int64_t>(i));
    }
}

TEST_CASE("visit pairs: interleaved patients match the brute-force oracle") {
    std::vector<VisitRecord> records;
    records.push_back(make_visit("P1", 10, {"Shock"}));
    records.push_back(make_visit("P2", 3, {"Pneumonia"}));
    records.push_back(make_visit("P3", 7, {"Shock"}));
    records.push_back(make_visit("P1", 4, {"Pneumonia"}));
    records.push_back(make_visit("P2", 9, {"Shock"}));
    records.push_back(make_visit("P1", 6, {"Shock", "Pneumonia"}));
    records.push_back(make_visit("P2", 15, {"Pneumonia"}));

    const auto pairs = build_visit_pairs(records);
    // Sum over patients of (visits - 1): P1 has 3, P2 has 3, P3 has 1.
    CHECK(pairs.size() == 2 + 2 + 0);
    std::size_t oracle_total = 0;
    for (const auto& pid : {"P1", "P2", "P3"}) {
        const auto oracle = brute_force_pairs(records, pid);
        oracle_total += oracle.size();
        for (const auto& p : pairs) {
            if (p.source.patient_id != pid) {
                continue;
            }
            bool found = false;
            for (const auto& [t0, t1] : oracle) {
                if (t0 == p.source.visit_time) {
                    found = true;
                }
            }
            CHECK(found);
        }
    }
    CHECK(pairs.size() == oracle_total);
}

TEST_CASE("rank_efficacy: hand-counted smoothing example") {
    // d1 with m1: 4 exposed, 3 resolved; d1 with m2: 4 exposed, 1 resolved.
    std::vector<VisitPair> pairs;
    auto add_pair = [&](const std::string& med, bool resolved) {
        VisitPair p;
        p.source = make_visit("A", 0, {"d1"}, {med});
        p.next_diagnoses = resolved ? std::vector<std::string>{} :
                                      std::vector<std::string>{"d1"};
        pairs.push_back(p);
    };
    add_pair("m1", true);
    add_pair("m1", true);
    add_pair("m1", true);
    add_pair("m1", false);
    add_pair("m2", true);
    add_pair("m2", false);
    add_pair("m2", false);
    add_pair("m2", false);

    const auto table = rank_efficacy(pairs);
    const auto* c1 = table.find("d1", {TreatmentKind::medication, "m1"});
    REQUIRE(c1 != nullptr);
    CHECK(c1->exposed_pairs == 4);
    CHECK(c1->resolved_pairs == 3);
    CHECK(efficacy_score(*c1) == doctest::Approx(4.0 / 6.0));
    const auto* c2 = table.find("d1", {TreatmentKind::medication, "m2"});
    REQUIRE(c2 != nullptr);
    CHECK(efficacy_score(*c2) == doctest::Approx(2.0 / 6.0));

    const auto ranked = top_k_treatments(table, "d1", 5);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].treatment.code == "m1");
    CHECK(ranked[1].treatment.code == "m2");

    // Never co-occurring treatment has no cell.
    CHECK(table.find("d1", {TreatmentKind::procedure, "proc_x"}) == nullptr);
    // Empty input is an empty table, not an error.
    CHECK(rank_efficacy({}).entry_count() == 0);
}

TEST_CASE("rank_efficacy equals the brute-force recount on synthetic cohorts") {
    const auto registry = PhenotypeRegistry::builtin();
    for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
        CohortSpec spec;
        spec.seed = seed;
        spec.n_patients = 40; // stays under 200 pairs
        spec.planted = demo_planted_efficacy();
        const auto records = generate_synthetic_cohort(spec, registry);
        const auto pairs = build_visit_pairs(records);
        REQUIRE(pairs.size() <= 200);
        const auto table = rank_efficacy(pairs);
        const auto oracle = brute_force_efficacy(pairs);

        std::size_t table_cells = table.entry_count();
        CHECK(table_cells == oracle.size());
        for (const auto& [key, cell] : oracle) {
            const auto* mine = table.find(key.first, key.second);
            REQUIRE(mine != nullptr);
            CHECK(mine->exposed_pairs == cell.exposed_pairs);
            CHECK(mine->resolved_pairs == cell.resolved_pairs);
            CHECK(efficacy_score(*mine) == efficacy_score(cell));
            CHECK(efficacy_score(*mine) >= 0.0);
            CHECK(efficacy_score(*mine) <= 1.0);
        }
    }
}

TEST_CASE("top_k: truncation, unknown disease, and tie-break total order") {
    CHECK(top_k_treatments(rank_efficacy({}), "absent", 5).empty());

    // Build ties: two treatments with identical counts, distinct codes.
    std::vector<VisitPair> pairs;
    for (int i = 0; i < 4; ++i) {
        VisitPair p;
        p.source = make_visit("A", i, {"d"}, {"mb", "ma"}, {"ma"});
        p.next_diagnoses = i < 2 ? std::vector<std::string>{} :
                                   std::vector<std::string>{"d"};
        pairs.push_back(p);
    }
    const auto table = rank_efficacy(pairs);
    const auto ranked = top_k_treatments(table, "d", 10);
    REQUIRE(ranked.size() == 3);
    // All scores tie at (2+1)/(4+2); order falls back to code then kind.
    CHECK(ranked[0].treatment.code == "ma");
    CHECK(ranked[0].treatment.kind == TreatmentKind::medication);
    CHECK(ranked[1].treatment.code == "ma");
    CHECK(ranked[1].treatment.kind == TreatmentKind::procedure);
    CHECK(ranked[2].treatment.code == "mb");

    // Brute-force total order: prefix property for every k.
    auto full = ranked;
    for (std::size_t k = 1; k <= full.size(); ++k) {
        const auto prefix = top_k_treatments(table, "d", k);
        REQUIRE(prefix.size() == k);
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(prefix[i].treatment == full[i].treatment);
        }
    }
    CHECK_THROWS_AS(top_k_treatments(table, "d", 0), contract_error);
}

TEST_CASE("top_k respects min_support") {
    std::vector<VisitPair> pairs;
    for (int i = 0; i < 2; ++i) { // below default support of 3
        VisitPair p;
        p.source = make_visit("A", i, {"d"}, {"rare"});
        p.next_diagnoses = {};
        pairs.push_back(p);
    }
    const auto table = rank_efficacy(pairs);
    CHECK(table.find("d", {TreatmentKind::medication, "rare"}) != nullptr); // stored
    CHECK(top_k_treatments(table, "d", 5).empty());                         // unranked
}

TEST_CASE("render: golden text, labels, and dropped codes") {
    const auto registry = PhenotypeRegistry::builtin();
    const auto tmpl = SampleTemplate::builtin();

    std::vector<VisitPair> stat_pairs;
    for (int i = 0; i < 4; ++i) {
        VisitPair p;
        p.source = make_visit("Q", i, {"Pneumonia"}, {"med_a"});
        p.next_diagnoses = i < 3 ? std::vector<std::string>{} :
                                   std::vector<std::string>{"Pneumonia"};
        stat_pairs.push_back(p);
        VisitPair q;
        q.source = make_visit("R", i, {"Pneumonia"}, {"med_b"});
        q.next_diagnoses = i < 1 ? std::vector<std::string>{} :
                                   std::vector<std::string>{"Pneumonia"};
        stat_pairs.push_back(q);
    }
    const auto table = rank_efficacy(stat_pairs);

    VisitPair pair;
    pair.source = make_visit("P1", 0, {"Pneumonia", "Shock"}, {"med_a"});
    pair.visit_index = 0;
    pair.next_diagnoses = {"Shock", "NotARegisteredCode"};

    RenderStats stats;
    const auto sample = render_sample(pair, table, registry, tmpl, 5, &stats);
    const char* expected =
        "### Instruction:\n"
        "Predict which of the 25 tracked conditions will be present at the patient's next "
        "visit, given this visit and its treatment efficacy rankings.\n"
        "\n"
        "### Input:\n"
        "Current diagnoses: Pneumonia, Shock\n"
        "Medications administered: med_a\n"
        "Procedures performed: none\n"
        "Treatment efficacy ranking: For Pneumonia: 1. med_a (medication, efficacy 0.667), "
        "2. med_b (medication, efficacy 0.333). For Shock: no ranked treatments.\n";
    CHECK(sample.text == expected);

    REQUIRE(sample.label.size() == 25);
    CHECK(sample.label[24] == 1); // Shock
    CHECK(std::count(sample.label.begin(), sample.label.end(), 1) == 1);
    CHECK(stats.dropped_codes.at("NotARegisteredCode") == 1);

    // Pure function: identical bytes on a second call.
    const auto again = render_sample(pair, table, registry, tmpl, 5);
    CHECK(again.text == sample.text);

    // Empty next visit gives an all-zero label.
    VisitPair empty_next = pair;
    empty_next.next_diagnoses = {};
    const auto zero = render_sample(empty_next, table, registry, tmpl, 5);
    CHECK(std::count(zero.label.begin(), zero.label.end(), 0) == 25);
}

TEST_CASE("template validation names the missing placeholder") {
    try {
        SampleTemplate::from_text("only {diagnoses} and {medications} and {procedures}");
        FAIL("expected template_error");
    } catch (const template_error& e) {
        CHECK(std::string(e.what()).find("{efficacy_ranking}") != std::string::npos);
    }
}

TEST_CASE("fused JSONL round-trips") {
    const auto registry = PhenotypeRegistry::builtin();
    std::vector<FusedSample> samples(2);
    samples[0].text = "alpha \"quoted\" text\nwith newline";
    samples[0].label.assign(25, 0);
    samples[0].label[3] = 1;
    samples[0].patient_id = "P1";
    samples[0].visit_index = 0;
    samples[1].text = "beta";
    samples[1].label.assign(25, 1);
    samples[1].patient_id = "P2";
    samples[1].visit_index = 4;

    testsupport::TempDir dir("jsonl");
    const auto path = dir.path() / "fused.jsonl";
    write_fused_jsonl(path, samples);
    const auto loaded = read_fused_jsonl(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].text == samples[0].text);
    CHECK(loaded[0].label == samples[0].label);
    CHECK(loaded[1].visit_index == 4);

    testsupport::write_file(path, "{\"text\":\"x\",\"label\":[1,2],\"patient_id\":\"p\","
                                  "\"visit_index\":0}\n");
    CHECK_THROWS_AS(read_fused_jsonl(path), schema_error);
}

TEST_CASE("phenotype_labels projection") {
    const auto registry = PhenotypeRegistry::builtin();
    const auto empty = phenotype_labels({}, registry);
    CHECK(std::count(empty.begin(), empty.end(), 0) == 25);

    std::vector<std::string> all;
    for (const auto& e : registry.entries()) {
        all.push_back(e.name);
    }
    const auto ones = phenotype_labels(all, registry);
    CHECK(std::count(ones.begin(), ones.end(), 1) == 25);

    const auto two = phenotype_labels({"Pneumonia", "Shock"}, registry);
    CHECK(two[21] == 1);
    CHECK(two[24] == 1);
    CHECK(std::count(two.begin(), two.end(), 1) == 2);

    // Duplication- and order-independent.
    const auto dup = phenotype_labels({"Shock", "Pneumonia", "Shock", "Pneumonia"}, registry);
    CHECK(dup == two);
}

TEST_CASE("synthetic cohort: determinism, planting, and validation") {
    const auto registry = PhenotypeRegistry::builtin();
    CohortSpec empty;
    empty.n_patients = 0;
    CHECK(generate_synthetic_cohort(empty, registry).empty());

    CohortSpec spec;
    spec.seed = 2024;
    spec.n_patients = 500;
    spec.planted = {
        {"Pneumonia", {TreatmentKind::medication, "m_good"}, 0.9},
        {"Pneumonia", {TreatmentKind::medication, "m_poor"}, 0.1},
    };
    const auto records = generate_synthetic_cohort(spec, registry);
    const auto pairs = build_visit_pairs(records);
    const auto table = rank_efficacy(pairs);
    const auto ranked = top_k_treatments(table, "Pneumonia", 2);
    REQUIRE(ranked.size() >= 2);
    CHECK(ranked[0].treatment.code == "m_good");

    // Identical seed, identical serialized bytes.
    testsupport::TempDir dir("cohort");
    const auto p1 = dir.path() / "a.csv";
    const auto p2 = dir.path() / "b.csv";
    write_visits_csv(p1, records);
    write_visits_csv(p2, generate_synthetic_cohort(spec, registry));
    CHECK(testsupport::read_file(p1) == testsupport::read_file(p2));

    CohortSpec bad = spec;
    bad.planted[0].resolve_prob = 1.5;
    CHECK_THROWS_AS(generate_synthetic_cohort(bad, registry), config_error);
}

TEST_CASE("pair count invariant on synthetic cohorts") {
    const auto registry = PhenotypeRegistry::builtin();
    CohortSpec spec;
    spec.seed = 5;
    spec.n_patients = 60;
    const auto records = generate_synthetic_cohort(spec, registry);
    std::map<std::string, std::size_t> visits;
    for (const auto& r : records) {
        ++visits[r.patient_id];
    }
    std::size_t expected = 0;
    for (const auto& [pid, v] : visits) {
        expected += v > 0 ? v - 1 : 0;
    }
    CHECK(build_visit_pairs(records).size() == expected);
}

TEST_CASE("patient-level split keeps patients on one side") {
    const auto registry = PhenotypeRegistry::builtin();
    CohortSpec spec;
    spec.seed = 77;
    spec.n_patients = 50;
    const auto pairs = build_visit_pairs(generate_synthetic_cohort(spec, registry));
    const auto split = split_pairs_by_patient(pairs, 0.8, 123);
    CHECK(split.train.size() + split.eval.size() == pairs.size());
    std::set<std::string> train_patients, eval_patients;
    for (const auto& p : split.train) {
        train_patients.insert(p.source.patient_id);
    }
    for (const auto& p : split.eval) {
        eval_patients.insert(p.source.patient_id);
    }
    for (const auto& pid : eval_patients) {
        CHECK(!train_patients.count(pid));
    }
    CHECK_THROWS_AS(split_pairs_by_patient(pairs, 0.0, 1), config_error);
}

TEST_CASE("efficacy table merge is additive") {
    VisitPair p;
    p.source = make_visit("A", 0, {"d"}, {"m"});
    p.next_diagnoses = {};
    EfficacyTable a = rank_efficacy({p, p});
    const EfficacyTable b = rank_efficacy({p});
    a.merge(b);
    const auto* cell = a.find("d", {TreatmentKind::medication, "m"});
    REQUIRE(cell != nullptr);
    CHECK(cell->exposed_pairs == 3);
    CHECK(cell->resolved_pairs == 3);
}

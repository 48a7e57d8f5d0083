#include "ckd/fusion/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd::fusion {

namespace {

std::string padded_code(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%02zu", prefix, i);
    return buf;
}

std::string padded_pid(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "P%05zu", i);
    return buf;
}

} // namespace

void CohortSpec::validate(const PhenotypeRegistry& registry) const {
    auto check_prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw config_error(std::string(name) + " must be in [0,1], got " + std::to_string(p));
        }
    };
    check_prob(baseline_resolve_prob, "baseline_resolve_prob");
    check_prob(new_disease_prob, "new_disease_prob");
    check_prob(treat_prob, "treat_prob");
    check_prob(extra_treatment_prob, "extra_treatment_prob");
    for (const auto& p : planted) {
        check_prob(p.resolve_prob, ("planted resolve_prob for " + p.disease).c_str());
        if (!registry.index_of(p.disease)) {
            throw config_error("planted disease not in registry: " + p.disease);
        }
    }
    if (visits_min < 1 || visits_min > visits_max) {
        throw config_error("visit range must satisfy 1 <= visits_min <= visits_max");
    }
    if (initial_diagnoses_min < 1 || initial_diagnoses_min > initial_diagnoses_max ||
        initial_diagnoses_max > PhenotypeRegistry::kNumPhenotypes) {
        throw config_error("initial diagnosis range must satisfy 1 <= min <= max <= 25");
    }
    if (n_aux_medications == 0 && n_aux_procedures == 0) {
        throw config_error("at least one auxiliary treatment pool must be non-empty");
    }
}

std::vector<VisitRecord> generate_synthetic_cohort(const CohortSpec& spec,
                                                   const PhenotypeRegistry& registry) {
    spec.validate(registry);
    Rng rng(spec.seed);

    std::vector<TreatmentRef> aux_pool;
    for (std::size_t i = 0; i < spec.n_aux_medications; ++i) {
        aux_pool.push_back({TreatmentKind::medication, padded_code("med_", i)});
    }
    for (std::size_t i = 0; i < spec.n_aux_procedures; ++i) {
        aux_pool.push_back({TreatmentKind::procedure, padded_code("proc_", i)});
    }

    // Planted candidates grouped per disease, in spec order.
    std::map<std::string, std::vector<const PlantedEfficacy*>> candidates;
    for (const auto& p : spec.planted) {
        candidates[p.disease].push_back(&p);
    }

    std::vector<VisitRecord> records;
    for (std::size_t pi = 0; pi < spec.n_patients; ++pi) {
        const std::string pid = padded_pid(pi);
        const std::size_t visits =
            spec.visits_min + rng.below(spec.visits_max - spec.visits_min + 1);

        // Initial diagnoses: a seeded partial shuffle of the registry.
        std::vector<std::size_t> order(PhenotypeRegistry::kNumPhenotypes);
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        rng.shuffle(order);
        const std::size_t k =
            spec.initial_diagnoses_min +
            rng.below(spec.initial_diagnoses_max - spec.initial_diagnoses_min + 1);
        std::set<std::size_t> current(order.begin(), order.begin() + k);

        for (std::size_t vi = 0; vi < visits; ++vi) {
            VisitRecord rec;
            rec.patient_id = pid;
            rec.visit_time = static_cast<std::int64_t>(vi);
            std::set<std::string> meds, procs;
            // The candidate treatment chosen for each active disease this
            // visit; drives the planted resolution draw below.
            std::map<std::size_t, const PlantedEfficacy*> chosen;
            for (std::size_t d : current) {
                rec.diagnoses.push_back(registry.name(d));
                if (rng.next_double() >= spec.treat_prob) {
                    continue;
                }
                const auto it = candidates.find(registry.name(d));
                TreatmentRef treatment;
                if (it != candidates.end()) {
                    const auto* pick = it->second[rng.below(it->second.size())];
                    treatment = pick->treatment;
                    chosen[d] = pick;
                } else {
                    treatment = aux_pool[rng.below(aux_pool.size())];
                }
                (treatment.kind == TreatmentKind::medication ? meds : procs)
                    .insert(treatment.code);
            }
            if (rng.next_double() < spec.extra_treatment_prob) {
                const auto& extra = aux_pool[rng.below(aux_pool.size())];
                (extra.kind == TreatmentKind::medication ? meds : procs).insert(extra.code);
            }
            rec.medications.assign(meds.begin(), meds.end());
            rec.procedures.assign(procs.begin(), procs.end());
            records.push_back(std::move(rec));

            if (vi + 1 == visits) {
                break;
            }
            // Transition to the next visit's disease state.
            std::set<std::size_t> next;
            for (std::size_t d : current) {
                const auto it = chosen.find(d);
                const double resolve_prob =
                    it != chosen.end() ? it->second->resolve_prob : spec.baseline_resolve_prob;
                if (rng.next_double() >= resolve_prob) {
                    next.insert(d);
                }
            }
            for (std::size_t d = 0; d < PhenotypeRegistry::kNumPhenotypes; ++d) {
                if (!current.count(d) && rng.next_double() < spec.new_disease_prob) {
                    next.insert(d);
                }
            }
            current = std::move(next);
        }
    }
    return records;
}

std::vector<PlantedEfficacy> demo_planted_efficacy() {
    return {
        {"Pneumonia", {TreatmentKind::medication, "med_px_strong"}, 0.9},
        {"Pneumonia", {TreatmentKind::medication, "med_px_weak"}, 0.15},
        {"Fluid and electrolyte disorders", {TreatmentKind::medication, "med_fl_strong"}, 0.85},
        {"Fluid and electrolyte disorders", {TreatmentKind::medication, "med_fl_weak"}, 0.2},
        {"Gastrointestinal hemorrhage", {TreatmentKind::procedure, "proc_gi_strong"}, 0.8},
        {"Gastrointestinal hemorrhage", {TreatmentKind::procedure, "proc_gi_weak"}, 0.2},
        {"Septicemia (except in labor)", {TreatmentKind::medication, "med_se_strong"}, 0.85},
        {"Septicemia (except in labor)", {TreatmentKind::medication, "med_se_weak"}, 0.25},
        {"Shock", {TreatmentKind::procedure, "proc_sh_strong"}, 0.75},
        {"Shock", {TreatmentKind::procedure, "proc_sh_weak"}, 0.2},
    };
}

} // namespace ckd::fusion

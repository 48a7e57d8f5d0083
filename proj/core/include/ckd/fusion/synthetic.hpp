#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckd/fusion/efficacy.hpp"
#include "ckd/fusion/records.hpp"

namespace ckd::fusion {

// Ground-truth association planted into a synthetic cohort: while `disease`
// is active and `treatment` was administered at a visit, the disease resolves
// before the next visit with probability resolve_prob.
struct PlantedEfficacy {
    std::string disease;
    TreatmentRef treatment;
    double resolve_prob = 0.5;
};

struct CohortSpec {
    std::uint64_t seed = 42;
    std::size_t n_patients = 100;
    std::size_t visits_min = 2;
    std::size_t visits_max = 4;
    std::vector<PlantedEfficacy> planted;

    // Resolution probability when no planted treatment was administered.
    double baseline_resolve_prob = 0.2;
    // Per absent disease, chance of onset at the next visit.
    double new_disease_prob = 0.02;
    std::size_t initial_diagnoses_min = 1;
    std::size_t initial_diagnoses_max = 3;
    // Chance a diagnosed disease receives one candidate treatment per visit.
    double treat_prob = 0.9;
    // Chance of one additional unrelated treatment per visit.
    double extra_treatment_prob = 0.5;
    std::size_t n_aux_medications = 10;
    std::size_t n_aux_procedures = 5;

    void validate(const PhenotypeRegistry& registry) const;
};

// Seeded generative cohort: identical spec (including seed) produces an
// identical record list. Visit times are the per-patient visit index.
std::vector<VisitRecord> generate_synthetic_cohort(const CohortSpec& spec,
                                                   const PhenotypeRegistry& registry);

// The demo planting used when a config does not specify its own: a
// strong/weak treatment pair for a handful of diseases.
std::vector<PlantedEfficacy> demo_planted_efficacy();

} // namespace ckd::fusion

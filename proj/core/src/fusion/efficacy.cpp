#include "ckd/fusion/efficacy.hpp"

#include <algorithm>

#include "ckd/errors.hpp"

namespace ckd::fusion {

const char* to_string(TreatmentKind kind) {
    return kind == TreatmentKind::medication ? "medication" : "procedure";
}

TreatmentKind treatment_kind_from_string(const std::string& s) {
    if (s == "medication") {
        return TreatmentKind::medication;
    }
    if (s == "procedure") {
        return TreatmentKind::procedure;
    }
    throw config_error("unknown treatment kind: " + s);
}

double efficacy_score(const EfficacyCell& cell) {
    return (static_cast<double>(cell.resolved_pairs) + kSmoothingA) /
           (static_cast<double>(cell.exposed_pairs) + kSmoothingA + kSmoothingB);
}

void EfficacyTable::add_observation(const std::string& disease, const TreatmentRef& treatment,
                                    bool resolved) {
    auto& cell = cells_[disease][treatment];
    ++cell.exposed_pairs;
    if (resolved) {
        ++cell.resolved_pairs;
    }
}

void EfficacyTable::merge(const EfficacyTable& other) {
    for (const auto& [disease, treatments] : other.cells_) {
        for (const auto& [treatment, cell] : treatments) {
            auto& mine = cells_[disease][treatment];
            mine.exposed_pairs += cell.exposed_pairs;
            mine.resolved_pairs += cell.resolved_pairs;
        }
    }
}

const EfficacyCell* EfficacyTable::find(const std::string& disease,
                                        const TreatmentRef& treatment) const {
    const auto d = cells_.find(disease);
    if (d == cells_.end()) {
        return nullptr;
    }
    const auto t = d->second.find(treatment);
    if (t == d->second.end()) {
        return nullptr;
    }
    return &t->second;
}

std::vector<RankedTreatment> EfficacyTable::top_k(const std::string& disease,
                                                  std::size_t k) const {
    if (k < 1) {
        throw contract_error("top_k requires k >= 1");
    }
    const auto d = cells_.find(disease);
    if (d == cells_.end()) {
        return {};
    }
    std::vector<RankedTreatment> ranked;
    for (const auto& [treatment, cell] : d->second) {
        if (cell.exposed_pairs < min_support_) {
            continue;
        }
        ranked.push_back({treatment, efficacy_score(cell), cell.exposed_pairs,
                          cell.resolved_pairs});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedTreatment& a, const RankedTreatment& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.exposed_pairs != b.exposed_pairs) {
            return a.exposed_pairs > b.exposed_pairs;
        }
        if (a.treatment.code != b.treatment.code) {
            return a.treatment.code < b.treatment.code;
        }
        return a.treatment.kind < b.treatment.kind;
    });
    if (ranked.size() > k) {
        ranked.resize(k);
    }
    return ranked;
}

std::size_t EfficacyTable::entry_count() const {
    std::size_t n = 0;
    for (const auto& [disease, treatments] : cells_) {
        n += treatments.size();
    }
    return n;
}

EfficacyTable rank_efficacy(const std::vector<VisitPair>& pairs, std::size_t min_support) {
    EfficacyTable table(min_support);
    for (const auto& pair : pairs) {
        for (const auto& disease : pair.source.diagnoses) {
            const bool resolved = std::find(pair.next_diagnoses.begin(),
                                            pair.next_diagnoses.end(),
                                            disease) == pair.next_diagnoses.end();
            for (const auto& med : pair.source.medications) {
                table.add_observation(disease, {TreatmentKind::medication, med}, resolved);
            }
            for (const auto& proc : pair.source.procedures) {
                table.add_observation(disease, {TreatmentKind::procedure, proc}, resolved);
            }
        }
    }
    return table;
}

std::vector<RankedTreatment> top_k_treatments(const EfficacyTable& table,
                                              const std::string& disease, std::size_t k) {
    return table.top_k(disease, k);
}

} // namespace ckd::fusion

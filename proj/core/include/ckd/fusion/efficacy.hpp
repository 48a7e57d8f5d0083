#pragma once

#include <map>
#include <string>
#include <vector>

#include "ckd/fusion/records.hpp"

namespace ckd::fusion {

enum class TreatmentKind { medication, procedure };

const char* to_string(TreatmentKind kind);
TreatmentKind treatment_kind_from_string(const std::string& s);

struct TreatmentRef {
    TreatmentKind kind = TreatmentKind::medication;
    std::string code;

    auto operator<=>(const TreatmentRef&) const = default;
};

// Counts for one (disease, treatment) association. A pair is "exposed" when
// the disease and the treatment co-occur at the source visit, and "resolved"
// when that disease is additionally absent from the next visit.
struct EfficacyCell {
    std::size_t exposed_pairs = 0;
    std::size_t resolved_pairs = 0;
};

// Laplace smoothing constants for the efficacy score
// (resolved + a) / (exposed + a + b); rank entries additionally require
// kMinSupport exposed pairs (entries below it are stored but unranked).
inline constexpr double kSmoothingA = 1.0;
inline constexpr double kSmoothingB = 1.0;
inline constexpr std::size_t kDefaultMinSupport = 3;

double efficacy_score(const EfficacyCell& cell);

struct RankedTreatment {
    TreatmentRef treatment;
    double score = 0.0;
    std::size_t exposed_pairs = 0;
    std::size_t resolved_pairs = 0;
};

class EfficacyTable {
  public:
    explicit EfficacyTable(std::size_t min_support = kDefaultMinSupport)
        : min_support_(min_support) {}

    void add_observation(const std::string& disease, const TreatmentRef& treatment,
                         bool resolved);
    // Additive merge; commutative and associative, so shards can be combined
    // in any order.
    void merge(const EfficacyTable& other);

    const EfficacyCell* find(const std::string& disease, const TreatmentRef& treatment) const;

    // Descending by score, ties broken by higher exposure, then treatment
    // code, then kind. Entries under min_support are excluded. Unknown
    // disease yields an empty list. Returns fewer than k when fewer qualify.
    std::vector<RankedTreatment> top_k(const std::string& disease, std::size_t k) const;

    std::size_t min_support() const { return min_support_; }
    std::size_t entry_count() const;
    const std::map<std::string, std::map<TreatmentRef, EfficacyCell>>& entries() const {
        return cells_;
    }

  private:
    std::map<std::string, std::map<TreatmentRef, EfficacyCell>> cells_;
    std::size_t min_support_;
};

// Tallies every (source disease, source treatment) co-occurrence over the
// visit pairs. Every treatment present at the source visit is credited or
// blamed for every source disease; a disease counts as resolved exactly when
// it is absent from the next visit's diagnoses.
EfficacyTable rank_efficacy(const std::vector<VisitPair>& pairs,
                            std::size_t min_support = kDefaultMinSupport);

std::vector<RankedTreatment> top_k_treatments(const EfficacyTable& table,
                                              const std::string& disease, std::size_t k);

} // namespace ckd::fusion

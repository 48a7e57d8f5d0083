#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ckd::fusion {

// One patient visit. Code lists are kept sorted and de-duplicated so that
// every downstream transformation is order-independent and deterministic.
struct VisitRecord {
    std::string patient_id;
    std::int64_t visit_time = 0;
    std::vector<std::string> diagnoses;
    std::vector<std::string> medications;
    std::vector<std::string> procedures;
};

// A visit paired with the diagnoses observed at the same patient's next
// consecutive visit.
struct VisitPair {
    VisitRecord source;
    std::size_t visit_index = 0; // index of the source visit within its patient
    std::vector<std::string> next_diagnoses;
};

// Fixed 25-entry phenotype list; label index == registry index.
class PhenotypeRegistry {
  public:
    struct Entry {
        std::string name;
        std::string type; // acute | chronic | mixed
    };

    static constexpr std::size_t kNumPhenotypes = 25;

    static PhenotypeRegistry builtin();
    // Plain text, one "name<TAB>type" line per phenotype, exactly 25 lines.
    static PhenotypeRegistry load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const std::vector<Entry>& entries() const { return entries_; }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    std::optional<std::size_t> index_of(const std::string& name) const;

  private:
    explicit PhenotypeRegistry(std::vector<Entry> entries);
    std::vector<Entry> entries_;
};

struct IngestOptions {
    // When set, structurally malformed rows and rows with unparseable
    // timestamps are skipped and counted instead of aborting the ingest.
    bool lenient = false;
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_skipped = 0;
    std::vector<std::string> skipped_details;
};

// Reads the delimited visit table (comma separated, UTF-8, header row:
// patient_id, visit_time, diagnosis_codes, medication_codes,
// procedure_codes; multi-valued cells pipe-separated). Returns records
// sorted by (patient_id, visit_time). Duplicate (patient_id, visit_time)
// rows are always an error.
std::vector<VisitRecord> ingest_records(const std::filesystem::path& path,
                                        const IngestOptions& options = {},
                                        IngestReport* report = nullptr);

void write_visits_csv(const std::filesystem::path& path, const std::vector<VisitRecord>& records);

// Consecutive (i, i+1) pairs per patient; a patient with v visits yields
// exactly v-1 pairs and pairs never cross patients.
std::vector<VisitPair> build_visit_pairs(const std::vector<VisitRecord>& records);

// Multi-hot projection of a diagnosis set onto the registry. Entry i is 1
// iff registry name i is present. Codes outside the registry are ignored.
std::vector<int> phenotype_labels(const std::vector<std::string>& diagnoses,
                                  const PhenotypeRegistry& registry);

// Sorted + de-duplicated copy, the canonical form for code lists.
std::vector<std::string> normalize_codes(std::vector<std::string> codes);

struct PairSplit {
    std::vector<VisitPair> train;
    std::vector<VisitPair> eval;
};

// Patient-level split (a patient's pairs never straddle the boundary), with
// a seeded shuffle of the patient list; efficacy statistics are computed on
// the train side only.
PairSplit split_pairs_by_patient(const std::vector<VisitPair>& pairs, double train_fraction,
                                 std::uint64_t seed);

} // namespace ckd::fusion

#include "ckd/fusion/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd::fusion {

namespace {

const char* kBuiltinPhenotypes[] = {
    "Acute and unspecified renal failure\tacute",
    "Acute cerebrovascular disease\tacute",
    "Acute myocardial infarction\tacute",
    "Cardiac dysrhythmias\tmixed",
    "Chronic kidney disease\tchronic",
    "Chronic obstructive pulmonary disease\tchronic",
    "Complications of surgical/medical care\tacute",
    "Conduction disorders\tmixed",
    "Congestive heart failure; nonhypertensive\tmixed",
    "Coronary atherosclerosis and related\tchronic",
    "Diabetes mellitus with complications\tmixed",
    "Diabetes mellitus without complication\tchronic",
    "Disorders of lipid metabolism\tchronic",
    "Essential hypertension\tchronic",
    "Fluid and electrolyte disorders\tacute",
    "Gastrointestinal hemorrhage\tacute",
    "Hypertension with complications\tchronic",
    "Other liver diseases\tmixed",
    "Other lower respiratory disease\tacute",
    "Other upper respiratory disease\tacute",
    "Pleurisy; pneumothorax; pulmonary collapse\tacute",
    "Pneumonia\tacute",
    "Respiratory failure; insufficiency; arrest\tacute",
    "Septicemia (except in labor)\tacute",
    "Shock\tacute",
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) {
        ++b;
    }
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) {
        --e;
    }
    return s.substr(b, e - b);
}

std::vector<std::string> parse_multi_cell(const std::string& cell) {
    std::vector<std::string> codes;
    for (auto& part : split(cell, '|')) {
        auto t = trim(part);
        if (!t.empty()) {
            codes.push_back(std::move(t));
        }
    }
    return normalize_codes(std::move(codes));
}

} // namespace

std::vector<std::string> normalize_codes(std::vector<std::string> codes) {
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    return codes;
}

PhenotypeRegistry::PhenotypeRegistry(std::vector<Entry> entries) : entries_(std::move(entries)) {
    if (entries_.size() != kNumPhenotypes) {
        throw config_error("phenotype registry must have exactly 25 entries, got " +
                           std::to_string(entries_.size()));
    }
    std::set<std::string> seen;
    for (const auto& e : entries_) {
        if (!seen.insert(e.name).second) {
            throw config_error("duplicate phenotype name: " + e.name);
        }
    }
}

PhenotypeRegistry PhenotypeRegistry::builtin() {
    std::vector<Entry> entries;
    for (const char* line : kBuiltinPhenotypes) {
        const std::string s(line);
        const auto tab = s.find('\t');
        entries.push_back({s.substr(0, tab), s.substr(tab + 1)});
    }
    return PhenotypeRegistry(std::move(entries));
}

PhenotypeRegistry PhenotypeRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open registry file: " + path.string());
    }
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw schema_error("registry line missing tab separator: \"" + line + "\"");
        }
        entries.push_back({trim(line.substr(0, tab)), trim(line.substr(tab + 1))});
    }
    return PhenotypeRegistry(std::move(entries));
}

void PhenotypeRegistry::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write registry file: " + path.string());
    }
    for (const auto& e : entries_) {
        out << e.name << '\t' << e.type << '\n';
    }
}

std::optional<std::size_t> PhenotypeRegistry::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<VisitRecord> ingest_records(const std::filesystem::path& path,
                                        const IngestOptions& options, IngestReport* report) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open visit table: " + path.string());
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw schema_error("visit table is empty (no header row): " + path.string());
    }
    const auto header_cells = split(trim(header), ',');
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header_cells.size(); ++i) {
        col[trim(header_cells[i])] = i;
    }
    const char* required[] = {"patient_id", "visit_time", "diagnosis_codes", "medication_codes",
                              "procedure_codes"};
    for (const char* name : required) {
        if (!col.count(name)) {
            throw schema_error(std::string("visit table missing required column: ") + name);
        }
    }
    const std::size_t ci_pid = col["patient_id"];
    const std::size_t ci_time = col["visit_time"];
    const std::size_t ci_dx = col["diagnosis_codes"];
    const std::size_t ci_med = col["medication_codes"];
    const std::size_t ci_proc = col["procedure_codes"];

    IngestReport local;
    std::vector<VisitRecord> records;
    std::set<std::pair<std::string, std::int64_t>> seen_keys;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        ++local.rows_read;
        const auto cells = split(line, ',');
        auto skip_or_throw = [&](const std::string& why) {
            if (!options.lenient) {
                throw schema_error("row " + std::to_string(line_no) + ": " + why);
            }
            ++local.rows_skipped;
            local.skipped_details.push_back("row " + std::to_string(line_no) + ": " + why);
        };
        if (cells.size() < header_cells.size()) {
            skip_or_throw("expected " + std::to_string(header_cells.size()) + " cells, got " +
                          std::to_string(cells.size()));
            continue;
        }
        const std::string pid = trim(cells[ci_pid]);
        if (pid.empty()) {
            skip_or_throw("empty patient_id");
            continue;
        }
        const std::string time_str = trim(cells[ci_time]);
        std::int64_t t = 0;
        const auto [ptr, ec] =
            std::from_chars(time_str.data(), time_str.data() + time_str.size(), t);
        if (ec != std::errc() || ptr != time_str.data() + time_str.size()) {
            skip_or_throw("unparseable timestamp \"" + time_str + "\"");
            continue;
        }
        if (!seen_keys.insert({pid, t}).second) {
            throw schema_error("duplicate visit key (patient_id=" + pid +
                               ", visit_time=" + std::to_string(t) + ") at row " +
                               std::to_string(line_no));
        }
        VisitRecord rec;
        rec.patient_id = pid;
        rec.visit_time = t;
        rec.diagnoses = parse_multi_cell(cells[ci_dx]);
        rec.medications = parse_multi_cell(cells[ci_med]);
        rec.procedures = parse_multi_cell(cells[ci_proc]);
        records.push_back(std::move(rec));
    }
    std::sort(records.begin(), records.end(), [](const VisitRecord& a, const VisitRecord& b) {
        if (a.patient_id != b.patient_id) {
            return a.patient_id < b.patient_id;
        }
        return a.visit_time < b.visit_time;
    });
    if (report) {
        *report = std::move(local);
    }
    return records;
}

void write_visits_csv(const std::filesystem::path& path, const std::vector<VisitRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write visit table: " + path.string());
    }
    out << "patient_id,visit_time,diagnosis_codes,medication_codes,procedure_codes\n";
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) {
                s += '|';
            }
            s += v[i];
        }
        return s;
    };
    for (const auto& r : records) {
        out << r.patient_id << ',' << r.visit_time << ',' << join(r.diagnoses) << ','
            << join(r.medications) << ',' << join(r.procedures) << '\n';
    }
    if (!out) {
        throw io_error("failed writing visit table: " + path.string());
    }
}

std::vector<VisitPair> build_visit_pairs(const std::vector<VisitRecord>& records) {
    // Group by patient preserving input order; records are expected sorted
    // per patient by visit_time (ingest_records guarantees this).
    std::vector<VisitPair> pairs;
    std::map<std::string, std::vector<const VisitRecord*>> by_patient;
    for (const auto& r : records) {
        by_patient[r.patient_id].push_back(&r);
    }
    for (auto& [pid, visits] : by_patient) {
        std::sort(visits.begin(), visits.end(),
                  [](const VisitRecord* a, const VisitRecord* b) {
                      return a->visit_time < b->visit_time;
                  });
        for (std::size_t i = 0; i + 1 < visits.size(); ++i) {
            VisitPair p;
            p.source = *visits[i];
            p.visit_index = i;
            p.next_diagnoses = visits[i + 1]->diagnoses;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

PairSplit split_pairs_by_patient(const std::vector<VisitPair>& pairs, double train_fraction,
                                 std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw config_error("train fraction must be in (0,1], got " +
                           std::to_string(train_fraction));
    }
    std::set<std::string> patient_set;
    for (const auto& p : pairs) {
        patient_set.insert(p.source.patient_id);
    }
    std::vector<std::string> patients(patient_set.begin(), patient_set.end());
    Rng rng(seed);
    rng.shuffle(patients);
    const std::size_t n_train = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(patients.size()),
                         std::ceil(train_fraction * static_cast<double>(patients.size()))));
    std::set<std::string> train_patients(patients.begin(), patients.begin() + n_train);
    PairSplit split;
    for (const auto& p : pairs) {
        (train_patients.count(p.source.patient_id) ? split.train : split.eval).push_back(p);
    }
    return split;
}

std::vector<int> phenotype_labels(const std::vector<std::string>& diagnoses,
                                  const PhenotypeRegistry& registry) {
    std::vector<int> label(PhenotypeRegistry::kNumPhenotypes, 0);
    for (const auto& d : diagnoses) {
        if (auto idx = registry.index_of(d)) {
            label[*idx] = 1;
        }
    }
    return label;
}

} // namespace ckd::fusion

#include "ckd/fusion/render.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ckd/errors.hpp"

namespace ckd::fusion {

namespace {

const char* kBuiltinTemplate =
    "### Instruction:\n"
    "Predict which of the 25 tracked conditions will be present at the patient's next visit, "
    "given this visit and its treatment efficacy rankings.\n"
    "\n"
    "### Input:\n"
    "Current diagnoses: {diagnoses}\n"
    "Medications administered: {medications}\n"
    "Procedures performed: {procedures}\n"
    "Treatment efficacy ranking: {efficacy_ranking}\n";

const char* kPlaceholders[] = {"{diagnoses}", "{medications}", "{procedures}",
                               "{efficacy_ranking}"};

std::string join_or_none(const std::vector<std::string>& items) {
    if (items.empty()) {
        return "none";
    }
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) {
            out += ", ";
        }
        out += items[i];
    }
    return out;
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", score);
    return buf;
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

} // namespace

SampleTemplate::SampleTemplate(std::string text) : text_(std::move(text)) {
    for (const char* ph : kPlaceholders) {
        if (text_.find(ph) == std::string::npos) {
            throw template_error(std::string("template missing placeholder ") + ph);
        }
    }
}

SampleTemplate SampleTemplate::builtin() {
    return SampleTemplate(kBuiltinTemplate);
}

SampleTemplate SampleTemplate::from_text(std::string text) {
    return SampleTemplate(std::move(text));
}

SampleTemplate SampleTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open template file: " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return SampleTemplate(std::move(text));
}

void SampleTemplate::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write template file: " + path.string());
    }
    out << text_;
}

FusedSample render_sample(const VisitPair& pair, const EfficacyTable& table,
                          const PhenotypeRegistry& registry, const SampleTemplate& tmpl,
                          std::size_t top_k, RenderStats* stats) {
    std::string clause;
    for (const auto& disease : pair.source.diagnoses) {
        const auto ranked = table.top_k(disease, top_k == 0 ? 1 : top_k);
        if (!clause.empty()) {
            clause += " ";
        }
        clause += "For " + disease + ": ";
        if (ranked.empty()) {
            clause += "no ranked treatments.";
            continue;
        }
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            if (i) {
                clause += ", ";
            }
            clause += std::to_string(i + 1) + ". " + ranked[i].treatment.code + " (" +
                      to_string(ranked[i].treatment.kind) + ", efficacy " +
                      format_score(ranked[i].score) + ")";
        }
        clause += ".";
    }
    if (pair.source.diagnoses.empty()) {
        clause = "none";
    }

    std::string text = tmpl.text();
    replace_all(text, "{diagnoses}", join_or_none(pair.source.diagnoses));
    replace_all(text, "{medications}", join_or_none(pair.source.medications));
    replace_all(text, "{procedures}", join_or_none(pair.source.procedures));
    replace_all(text, "{efficacy_ranking}", clause);

    FusedSample sample;
    sample.text = std::move(text);
    sample.label = phenotype_labels(pair.next_diagnoses, registry);
    sample.patient_id = pair.source.patient_id;
    sample.visit_index = pair.visit_index;
    if (stats) {
        for (const auto& code : pair.next_diagnoses) {
            if (!registry.index_of(code)) {
                ++stats->dropped_codes[code];
            }
        }
    }
    return sample;
}

std::string render_raw_text(const VisitRecord& visit) {
    return "Visit record. Diagnoses: " + join_or_none(visit.diagnoses) +
           ". Medications: " + join_or_none(visit.medications) +
           ". Procedures: " + join_or_none(visit.procedures) + ".";
}

void write_fused_jsonl(const std::filesystem::path& path,
                       const std::vector<FusedSample>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write fused samples: " + path.string());
    }
    for (const auto& s : samples) {
        nlohmann::ordered_json j;
        j["text"] = s.text;
        j["label"] = s.label;
        j["patient_id"] = s.patient_id;
        j["visit_index"] = s.visit_index;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw io_error("failed writing fused samples: " + path.string());
    }
}

std::vector<FusedSample> read_fused_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open fused samples: " + path.string());
    }
    std::vector<FusedSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw schema_error("fused sample line " + std::to_string(line_no) +
                               " is not valid JSON: " + e.what());
        }
        FusedSample s;
        s.text = j.at("text").get<std::string>();
        s.label = j.at("label").get<std::vector<int>>();
        s.patient_id = j.at("patient_id").get<std::string>();
        s.visit_index = j.at("visit_index").get<std::size_t>();
        if (s.label.size() != PhenotypeRegistry::kNumPhenotypes) {
            throw schema_error("fused sample line " + std::to_string(line_no) + " has " +
                               std::to_string(s.label.size()) + " label entries, expected 25");
        }
        for (int v : s.label) {
            if (v != 0 && v != 1) {
                throw schema_error("fused sample line " + std::to_string(line_no) +
                                   " has non-binary label entry " + std::to_string(v));
            }
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace ckd::fusion

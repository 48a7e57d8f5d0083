#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ckd/fusion/efficacy.hpp"
#include "ckd/fusion/records.hpp"

namespace ckd::fusion {

// Text template with the four placeholders {diagnoses}, {medications},
// {procedures}, {efficacy_ranking}. Changing the builtin text breaks the
// golden rendering tests by design.
class SampleTemplate {
  public:
    static SampleTemplate builtin();
    static SampleTemplate load(const std::filesystem::path& path);
    static SampleTemplate from_text(std::string text);

    const std::string& text() const { return text_; }
    void save(const std::filesystem::path& path) const;

  private:
    explicit SampleTemplate(std::string text);
    std::string text_;
};

struct FusedSample {
    std::string text;
    std::vector<int> label; // 25 entries in {0,1}
    std::string patient_id;
    std::size_t visit_index = 0;
};

struct RenderStats {
    // Next-visit codes that fell outside the registry, with occurrence counts.
    std::map<std::string, std::size_t> dropped_codes;
};

// Deterministic natural-language rendering of one visit pair: the template's
// input lists plus a per-disease clause enumerating the top-k treatments by
// efficacy (rank and score). The label is the multi-hot projection of the
// next visit's diagnoses onto the registry.
FusedSample render_sample(const VisitPair& pair, const EfficacyTable& table,
                          const PhenotypeRegistry& registry, const SampleTemplate& tmpl,
                          std::size_t top_k = 5, RenderStats* stats = nullptr);

// Plain enumeration of the source visit without instruction or efficacy
// clause; the non-fused text used by ablations.
std::string render_raw_text(const VisitRecord& visit);

// JSON-lines serialization: {"text","label","patient_id","visit_index"}.
void write_fused_jsonl(const std::filesystem::path& path, const std::vector<FusedSample>& samples);
std::vector<FusedSample> read_fused_jsonl(const std::filesystem::path& path);

} // namespace ckd::fusion

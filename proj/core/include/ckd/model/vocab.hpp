#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckd/fusion/records.hpp"

namespace ckd::model {

// Tokenized inputs for a whole batch, row-major [batch x seq].
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<int> ids;  // batch*seq entries
    std::vector<int> mask; // 1 for real tokens (CLS included), 0 for PAD
};

// Fitted word-level vocabulary. PAD is always id 0, UNK id 1, CLS id 2;
// the remaining ids are dense and ordered by descending corpus frequency,
// ties broken lexicographically, so fitting is corpus-order independent.
class Vocabulary {
  public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kClsId = 2;

    // Lowercased maximal [a-z0-9_] runs; everything else separates tokens.
    static std::vector<std::string> split_words(const std::string& text);

    static Vocabulary fit(const std::vector<std::string>& texts, std::size_t min_freq = 1);

    std::size_t size() const { return id_to_token_.size(); }
    int id_of(const std::string& token) const;
    const std::string& token(std::size_t id) const { return id_to_token_[id]; }

    // One token per line; line number == id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    // Non-special token ids of each registry phenotype name, in registry
    // order; feeds the vocabulary-probability soft-label strategy.
    std::vector<std::vector<int>> label_token_ids(const fusion::PhenotypeRegistry& registry) const;

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

struct TokenizedText {
    std::vector<int> ids;
    std::vector<int> mask;
};

// CLS-prefixed, truncated and PAD-right to max_seq_len.
TokenizedText tokenize(const std::string& text, const Vocabulary& vocab, std::size_t max_seq_len);

TokenBatch tokenize_batch(const std::vector<std::string>& texts, const Vocabulary& vocab,
                          std::size_t max_seq_len);

} // namespace ckd::model

#include "ckd/model/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "ckd/errors.hpp"

namespace ckd::model {

namespace {

bool is_word_char(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_';
}

} // namespace

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

Vocabulary Vocabulary::fit(const std::vector<std::string>& texts, std::size_t min_freq) {
    std::map<std::string, std::size_t> freq;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) {
            ++freq[w];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [word, count] : freq) {
        if (count >= min_freq) {
            kept.emplace_back(word, count);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });

    Vocabulary v;
    v.id_to_token_ = {"<pad>", "<unk>", "<cls>"};
    for (auto& [word, count] : kept) {
        v.id_to_token_.push_back(word);
    }
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
    }
    return v;
}

int Vocabulary::id_of(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write vocabulary: " + path.string());
    }
    for (const auto& t : id_to_token_) {
        out << t << '\n';
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open vocabulary: " + path.string());
    }
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        v.id_to_token_.push_back(line);
    }
    if (v.id_to_token_.size() < 3 || v.id_to_token_[0] != "<pad>" ||
        v.id_to_token_[1] != "<unk>" || v.id_to_token_[2] != "<cls>") {
        throw schema_error("vocabulary file lacks the <pad>/<unk>/<cls> prefix: " +
                           path.string());
    }
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
    }
    return v;
}

std::vector<std::vector<int>>
Vocabulary::label_token_ids(const fusion::PhenotypeRegistry& registry) const {
    std::vector<std::vector<int>> out;
    out.reserve(registry.entries().size());
    for (const auto& entry : registry.entries()) {
        std::vector<int> ids;
        for (const auto& w : split_words(entry.name)) {
            const int id = id_of(w);
            if (id != kUnkId) {
                ids.push_back(id);
            }
        }
        out.push_back(std::move(ids));
    }
    return out;
}

TokenizedText tokenize(const std::string& text, const Vocabulary& vocab,
                       std::size_t max_seq_len) {
    if (max_seq_len < 1) {
        throw contract_error("tokenize: max_seq_len must be >= 1");
    }
    TokenizedText out;
    out.ids.reserve(max_seq_len);
    out.ids.push_back(Vocabulary::kClsId);
    for (const auto& w : Vocabulary::split_words(text)) {
        if (out.ids.size() >= max_seq_len) {
            break;
        }
        out.ids.push_back(vocab.id_of(w));
    }
    out.mask.assign(out.ids.size(), 1);
    while (out.ids.size() < max_seq_len) {
        out.ids.push_back(Vocabulary::kPadId);
        out.mask.push_back(0);
    }
    return out;
}

TokenBatch tokenize_batch(const std::vector<std::string>& texts, const Vocabulary& vocab,
                          std::size_t max_seq_len) {
    TokenBatch batch;
    batch.batch = texts.size();
    batch.seq = max_seq_len;
    batch.ids.reserve(texts.size() * max_seq_len);
    batch.mask.reserve(texts.size() * max_seq_len);
    for (const auto& t : texts) {
        auto one = tokenize(t, vocab, max_seq_len);
        batch.ids.insert(batch.ids.end(), one.ids.begin(), one.ids.end());
        batch.mask.insert(batch.mask.end(), one.mask.begin(), one.mask.end());
    }
    return batch;
}

} // namespace ckd::model

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "roleforge/common.hpp"

namespace roleforge::retrieval {

/// en: lowercase runs of ASCII alphanumerics; zh: one token per non-space,
/// non-punctuation code point.
std::vector<std::string> tokenize(const std::string& text, Language language);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

/// Okapi BM25 with the ln(1 + (N - n + 0.5)/(n + 0.5)) form of IDF.
class Bm25Index {
public:
    Bm25Index(Language language, double k1 = 1.5, double b = 0.75)
        : language_(language), k1_(k1), b_(b) {}

    void add(const std::string& doc_id, const std::string& text);

    size_t size() const { return docs_.size(); }
    double avg_doc_len() const { return size() == 0 ? 0.0 : total_len_ / static_cast<double>(size()); }
    Language language() const { return language_; }

    /// Sum of per-term BM25 contributions of the query against one document.
    double score(const std::vector<std::string>& query_tokens, size_t doc_pos) const;

    /// Highest score of the query against any document; 0 for an empty index.
    double max_score(const std::vector<std::string>& query_tokens) const;

    /// Top-k positive-score documents, ties broken by ascending doc_id.
    std::vector<ScoredDoc> top_k_tokens(const std::vector<std::string>& query_tokens,
                                        size_t k) const;

private:
    double idf(const std::string& term) const;

    Language language_;
    double k1_;
    double b_;
    double total_len_ = 0.0;

    struct Doc {
        std::string id;
        size_t len = 0;
        std::unordered_map<std::string, int> tf;
    };
    std::vector<Doc> docs_;
    std::unordered_map<std::string, int> doc_freqs_;  // term -> #docs containing it
    std::unordered_map<std::string, size_t> by_id_;
};

Bm25Index build_index(const std::vector<std::pair<std::string, std::string>>& docs,
                      Language language, double k1 = 1.5, double b = 0.75);

std::vector<ScoredDoc> top_k(const Bm25Index& index, const std::string& query, size_t k);

struct DedupResult {
    std::vector<std::string> retained;
    std::vector<std::string> removed;
};

/// Greedy first-come retention: an item is dropped when it scores at least
/// `threshold` against any already-retained item.
DedupResult dedup(const std::vector<std::pair<std::string, std::string>>& items,
                  double threshold, Language language);

/// The n items whose maximum BM25 score against the reference set is lowest,
/// ties broken by ascending id.
std::vector<std::string> least_similar(
    const std::vector<std::pair<std::string, std::string>>& items,
    const std::vector<std::string>& reference_set, size_t n, Language language);

}  // namespace roleforge::retrieval

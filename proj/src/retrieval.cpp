#include "roleforge/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace roleforge::retrieval {

std::vector<std::string> tokenize(const std::string& text, Language language) {
    std::vector<std::string> tokens;
    if (language == Language::en) {
        std::string current;
        for (size_t i = 0; i < text.size();) {
            char32_t cp = utf8_next(text, i);
            bool alnum = (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
                         (cp >= U'0' && cp <= U'9');
            if (alnum) {
                char c = static_cast<char>(cp);
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                current.push_back(c);
            } else if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) tokens.push_back(std::move(current));
        return tokens;
    }
    for (size_t i = 0; i < text.size();) {
        char32_t cp = utf8_next(text, i);
        if (is_space_cp(cp) || is_cjk_punct_cp(cp)) continue;
        if (cp < 0x80 && std::ispunct(static_cast<int>(cp))) continue;
        std::string tok;
        append_utf8(tok, cp);
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

void Bm25Index::add(const std::string& doc_id, const std::string& text) {
    if (by_id_.count(doc_id)) throw DuplicateDocId("duplicate doc_id: " + doc_id);
    Doc doc;
    doc.id = doc_id;
    auto tokens = tokenize(text, language_);
    doc.len = tokens.size();
    for (auto& t : tokens) doc.tf[t]++;
    for (const auto& [term, _] : doc.tf) doc_freqs_[term]++;
    total_len_ += static_cast<double>(doc.len);
    by_id_[doc_id] = docs_.size();
    docs_.push_back(std::move(doc));
}

double Bm25Index::idf(const std::string& term) const {
    auto it = doc_freqs_.find(term);
    if (it == doc_freqs_.end()) return 0.0;
    double n = static_cast<double>(it->second);
    double N = static_cast<double>(docs_.size());
    return std::log(1.0 + (N - n + 0.5) / (n + 0.5));
}

double Bm25Index::score(const std::vector<std::string>& query_tokens, size_t doc_pos) const {
    const Doc& doc = docs_.at(doc_pos);
    if (doc.len == 0) return 0.0;
    double norm = k1_ * (1.0 - b_ + b_ * static_cast<double>(doc.len) / avg_doc_len());
    double s = 0.0;
    for (const auto& term : query_tokens) {
        auto it = doc.tf.find(term);
        if (it == doc.tf.end()) continue;
        double tf = static_cast<double>(it->second);
        s += idf(term) * tf * (k1_ + 1.0) / (tf + norm);
    }
    return s;
}

double Bm25Index::max_score(const std::vector<std::string>& query_tokens) const {
    double best = 0.0;
    for (size_t i = 0; i < docs_.size(); ++i) best = std::max(best, score(query_tokens, i));
    return best;
}

std::vector<ScoredDoc> Bm25Index::top_k_tokens(const std::vector<std::string>& query_tokens,
                                               size_t k) const {
    std::vector<ScoredDoc> scored;
    for (size_t i = 0; i < docs_.size(); ++i) {
        double s = score(query_tokens, i);
        if (s > 0.0) scored.push_back({docs_[i].id, s});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

Bm25Index build_index(const std::vector<std::pair<std::string, std::string>>& docs,
                      Language language, double k1, double b) {
    Bm25Index index(language, k1, b);
    for (const auto& [id, text] : docs) index.add(id, text);
    return index;
}

std::vector<ScoredDoc> top_k(const Bm25Index& index, const std::string& query, size_t k) {
    if (k < 1) throw EmptyQuery("k must be >= 1");
    auto tokens = tokenize(query, index.language());
    if (tokens.empty()) throw EmptyQuery("query tokenizes to nothing");
    return index.top_k_tokens(tokens, k);
}

DedupResult dedup(const std::vector<std::pair<std::string, std::string>>& items,
                  double threshold, Language language) {
    DedupResult result;
    std::vector<const std::pair<std::string, std::string>*> kept;
    for (const auto& item : items) {
        // Retained items are the documents; the candidate is the query.
        Bm25Index index(language);
        for (const auto* r : kept) index.add(r->first, r->second);
        auto tokens = tokenize(item.second, language);
        bool dup = !tokens.empty() && index.size() > 0 && index.max_score(tokens) >= threshold;
        if (dup) {
            result.removed.push_back(item.first);
        } else {
            result.retained.push_back(item.first);
            kept.push_back(&item);
        }
    }
    return result;
}

std::vector<std::string> least_similar(
    const std::vector<std::pair<std::string, std::string>>& items,
    const std::vector<std::string>& reference_set, size_t n, Language language) {
    if (n >= items.size()) {
        std::vector<std::string> all;
        all.reserve(items.size());
        for (const auto& [id, _] : items) all.push_back(id);
        return all;
    }
    Bm25Index index(language);
    for (size_t i = 0; i < reference_set.size(); ++i)
        index.add("ref:" + std::to_string(i), reference_set[i]);

    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, text] : items) {
        auto tokens = tokenize(text, language);
        double worst = tokens.empty() ? 0.0 : index.max_score(tokens);
        scored.emplace_back(worst, id);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
    return out;
}

}  // namespace roleforge::retrieval

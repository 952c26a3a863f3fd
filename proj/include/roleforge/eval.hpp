#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roleforge/bench.hpp"
#include "roleforge/genpipe.hpp"

namespace roleforge::eval {

struct Prediction {
    std::string role_name;
    std::string instruction;
    std::string model_name;
    std::string output;
};

std::vector<Prediction> predictions_from_jsonl(const std::string& text,
                                               const std::string& origin = "<memory>");
std::string predictions_to_jsonl(std::span<const Prediction> predictions);

struct ReferenceSet {
    std::vector<std::string> raw_refs;  // original general-instruction answers
    std::vector<std::string> cus_refs;  // up to 5 role-customized candidates
    std::vector<std::string> spe_refs;  // role-specific answers
    Language language = Language::en;
};

/// (role, instruction) -> references. RAW answers are keyed by instruction
/// alone and shared across roles.
class ReferenceTable {
public:
    void add_raw(const std::string& instruction, std::vector<std::string> answers);
    const ReferenceSet* find(const std::string& role, const std::string& instruction) const;

    /// Builds CUS refs from general test candidates (ranks 1..5) and SPE
    /// refs from specific test samples.
    static ReferenceTable from_dataset(const bench::Dataset& dataset);

    std::map<std::pair<std::string, std::string>, ReferenceSet>& entries() { return entries_; }

private:
    std::map<std::pair<std::string, std::string>, ReferenceSet> entries_;
    std::map<std::string, std::vector<std::string>> raw_by_instruction_;
};

/// Rouge-L F-measure against the best-matching reference, over BM25
/// tokenization; 0 when either side is empty.
double rouge_l(const std::string& candidate, std::span<const std::string> references,
               Language language);

struct RougeReport {
    std::optional<double> cus;  // x100
    std::optional<double> raw;
    std::optional<double> spe;
    double avg = 0.0;
    int n_cus = 0;
    int n_raw = 0;
    int n_spe = 0;
};

std::map<std::string, RougeReport> evaluate(std::span<const Prediction> predictions,
                                            const ReferenceTable& references);

std::string report_table(const std::map<std::string, RougeReport>& reports);
nlohmann::ordered_json report_json(const std::map<std::string, RougeReport>& reports);

struct RankingRecord {
    std::string model;
    int rank = 1;
    std::string reason;
};

/// Extracts the first bracketed list of {model, reason, rank} records,
/// tolerating single quotes and surrounding prose.
std::vector<RankingRecord> parse_judge_response(const std::string& raw);

enum class AggregationMode { multiway, pairwise_vs_reference };

struct RankingSummary {
    double win_rate = 0.0;     // percent
    double avg_ranking = 0.0;  // mean rank position
    int appearances = 0;
};

/// multiway: win = ranked first (co-winners both count). pairwise: win =
/// strictly outranks the reference model.
std::map<std::string, RankingSummary> aggregate_rankings(
    std::span<const std::vector<RankingRecord>> verdicts, AggregationMode mode,
    const std::string& reference_model = "");

struct JudgeRunReport {
    std::vector<std::vector<RankingRecord>> verdicts;
    int unparseable = 0;
    int backend_calls = 0;
};

/// Renders one judge prompt per (role, instruction) in the subset with the
/// answer order shuffled by a seeded permutation, and parses the verdicts.
/// Profiles are matched to samples by role name; samples of roles with no
/// profile (or fewer than two model answers) are skipped.
JudgeRunReport run_judge(std::span<const genpipe::Sample> subset,
                         std::span<const Prediction> predictions,
                         std::span<const corpus::RoleProfile> profiles,
                         genpipe::LlmBackend& backend, uint64_t shuffle_seed,
                         const genpipe::CallOptions& options = {});

}  // namespace roleforge::eval

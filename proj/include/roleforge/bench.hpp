#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roleforge/genpipe.hpp"

namespace roleforge::bench {

using genpipe::Sample;

struct Dataset {
    std::vector<Sample> samples;
    nlohmann::ordered_json manifest;  // roles, languages, seed, source counts, versions
};

enum class SplitKind { instruction_gen, role_gen };

struct SplitSpec {
    SplitKind kind = SplitKind::instruction_gen;
    int general_train = 1200;
    int general_test = 300;
    int specific_test_cap = 50;
    int roles_train = 80;
    int roles_test = 10;
    int rolegen_general_test_per_role = 500;
    double scale = 1.0;  // proportional downscaling for desk-size corpora
    uint64_t seed = 0;

    int scaled(int n) const;
};

/// Assigns instruction-level splits: distinct general instructions are
/// partitioned 4:1 (shared across all roles), specific train_pool samples
/// stay in train, and each role's test_pool shrinks to at most
/// specific_test_cap questions least similar to the role's train ones.
Dataset split_instruction_gen(const Dataset& dataset, const SplitSpec& spec);

/// Holds out whole English roles. Held-out roles contribute up to
/// rolegen_general_test_per_role general instruction groups plus all their
/// specific samples to the test split; every other role goes to train.
Dataset split_role_gen(const Dataset& dataset, const SplitSpec& spec);

enum class EvalSubsetKind { instruction_gen, role_gen, manual };

/// Seeded evaluation subsets over the test split: 20 general + 20 specific
/// instructions per role (instruction_gen), 50 + 50 per held-out role
/// (role_gen), or 500 instructions overall (manual). One representative
/// sample per (role, instruction) group.
std::vector<Sample> make_eval_subset(const Dataset& dataset, EvalSubsetKind kind, uint64_t seed);

struct StatsReport {
    long long samples = 0;
    long long instructions = 0;
    long long general_samples = 0;
    long long general_instructions = 0;
    long long general_samples_en = 0;
    long long general_instructions_en = 0;
    long long general_samples_zh = 0;
    long long general_instructions_zh = 0;
    long long specific_samples = 0;
    long long specific_instructions = 0;
    long long specific_samples_en = 0;
    long long specific_samples_zh = 0;
    long long script_agnostic_questions = 0;
    long long script_based_questions = 0;
    long long roles = 0;
    long long roles_en = 0;
    long long roles_zh = 0;
    double avg_instruction_words = 0.0;
    double avg_response_words = 0.0;

    std::string to_table() const;
    nlohmann::ordered_json to_json() const;
};

StatsReport compute_stats(const Dataset& dataset);

/// Loads an externally published dataset tree (JSONL files whose records
/// carry role/question/generated fields) into the Sample model so the same
/// stats reporter applies. Category and language are inferred from the
/// record or the file path.
Dataset load_external_dataset(const std::filesystem::path& dir);

std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text, const std::string& origin = "<memory>");
void store_dataset(const Dataset& dataset, const std::filesystem::path& samples_path,
                   const std::filesystem::path& manifest_path);
Dataset load_dataset(const std::filesystem::path& samples_path,
                     const std::filesystem::path& manifest_path = {});

/// Stable ordering used for byte-identical output files.
void sort_samples(std::vector<Sample>& samples);

}  // namespace roleforge::bench

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "roleforge/bench.hpp"
#include "roleforge/corpus.hpp"
#include "roleforge/genpipe.hpp"
#include "roleforge/segmenter.hpp"

namespace roleforge::pipeline {

struct RoleConfig {
    std::string role_name;
    Language language = Language::en;
    std::filesystem::path script;
    std::string description;
    std::vector<std::string> catchphrases;
    std::optional<std::filesystem::path> rules;  // per-script ParseRules
};

struct BackendConfig {
    std::string kind = "mock";  // mock | http
    std::string endpoint = "http://127.0.0.1:8080";
    std::string model;
    std::string api_key_env = "ROLEFORGE_API_KEY";
    int parallelism = 4;
    int retries = 3;
    int retry_base_delay_ms = 100;
    int min_interval_ms = 0;
};

struct ProjectConfig {
    std::vector<RoleConfig> roles;
    std::filesystem::path instructions;  // general instructions JSONL
    seg::SegConfig seg;
    double dedup_threshold = 6.0;
    bench::SplitSpec split;
    genpipe::SpecificGenOptions specific;
    BackendConfig backend;
    uint64_t seed = 0;

    /// JSON config file; relative paths resolve against the file's directory.
    static ProjectConfig load(const std::filesystem::path& path);
};

struct InstructionRecord {
    std::string instruction;
    Language language = Language::en;
    std::vector<std::string> raw_answers;
};

std::vector<InstructionRecord> load_instructions(const std::filesystem::path& path);

inline const std::vector<std::string> kAllStages = {"parse",  "segment", "generate",
                                                    "filter", "split",   "stats"};

/// Runs the requested stages in pipeline order against <project>/artifacts.
/// Each stage is content-hash guarded: unchanged inputs with existing
/// outputs are skipped. Returns 0 on success; failures report the stage.
int run_pipeline(const ProjectConfig& config, const std::vector<std::string>& stages,
                 const std::filesystem::path& project_dir, std::ostream& log);

/// Exclusive per-project lock; held for the lifetime of the object.
class ProjectLock {
public:
    explicit ProjectLock(const std::filesystem::path& project_dir);
    ~ProjectLock();
    ProjectLock(const ProjectLock&) = delete;
    ProjectLock& operator=(const ProjectLock&) = delete;

private:
    std::filesystem::path path_;
    bool owned_ = false;
};

std::string slugify(const std::string& name);

}  // namespace roleforge::pipeline

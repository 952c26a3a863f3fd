#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>

#include "roleforge/common.hpp"
#include "roleforge/corpus.hpp"
#include "roleforge/prompts.hpp"
#include "roleforge/retrieval.hpp"
#include "roleforge/segmenter.hpp"

namespace roleforge::genpipe {

// ---------------------------------------------------------------------------
// Backend contract
// ---------------------------------------------------------------------------

struct GenParams {
    double temperature = 0.7;
    double top_p = 0.95;
    int max_tokens = 2000;
    double frequency_penalty = 0.0;
    double presence_penalty = 0.0;

    static GenParams rolegpt() { return {0.7, 0.95, 200, 0.0, 0.0}; }
    static GenParams standard() { return {0.7, 0.95, 2000, 0.0, 0.0}; }
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string name() const = 0;
    /// nonce distinguishes repeated samples of the same prompt; transport
    /// failures are reported as TransportError (retryable).
    virtual std::string complete(const std::vector<prompts::Message>& messages,
                                 const GenParams& params, uint64_t nonce) = 0;
};

/// Deterministic offline backend: output depends only on (messages, nonce,
/// seed). Recognizes triplet-generation and judge prompts well enough to
/// emit format-conformant text.
class MockBackend : public LlmBackend {
public:
    explicit MockBackend(uint64_t seed) : seed_(seed) {}

    std::string name() const override { return "mock"; }
    std::string complete(const std::vector<prompts::Message>& messages,
                         const GenParams& params, uint64_t nonce) override;

    /// The next n complete() invocations raise TransportError.
    void fail_next(int n) { transport_failures_ = n; }
    /// The next n triplet calls emit unparseable text.
    void garble_next(int n) { garbled_calls_ = n; }
    int calls_seen() const { return calls_seen_; }
    /// Low confidence is emitted for every (low_every)-th triplet; 0 = never.
    void set_low_confidence_period(int p) { low_every_ = p; }

private:
    uint64_t seed_;
    int transport_failures_ = 0;
    int garbled_calls_ = 0;
    int calls_seen_ = 0;
    int low_every_ = 4;
    std::mutex mu_;
};

struct HttpBackendConfig {
    std::string endpoint = "http://127.0.0.1:8080";
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "ROLEFORGE_API_KEY";
    int timeout_seconds = 60;
};

/// Chat-completions client over HTTP. The API key is read from the
/// configured environment variable at call time.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

    std::string name() const override { return "http"; }
    std::string complete(const std::vector<prompts::Message>& messages,
                         const GenParams& params, uint64_t nonce) override;

private:
    HttpBackendConfig config_;
};

// ---------------------------------------------------------------------------
// Call ledger + retrying runner
// ---------------------------------------------------------------------------

struct LedgerEntry {
    std::string request_hash;
    std::string backend;
    GenParams params;
    std::string response;
    double latency_ms = 0.0;
    int attempts = 1;
};

/// Append-only JSONL record of every backend call, keyed by request hash.
/// A pre-existing entry short-circuits the call, which is what makes an
/// interrupted generation stage resumable.
class CallLedger {
public:
    explicit CallLedger(std::filesystem::path path);

    std::optional<std::string> lookup(const std::string& request_hash) const;
    void record(const LedgerEntry& entry);
    size_t size() const { return entries_.size(); }
    int total_retries() const;

private:
    std::filesystem::path path_;
    std::vector<LedgerEntry> entries_;
    std::unordered_map<std::string, size_t> by_hash_;
    mutable std::mutex mu_;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 100;
    double multiplier = 2.0;
};

struct CallOptions {
    RetryPolicy retry;
    int parallelism = 4;
    int min_interval_ms = 0;  // rate limiter: spacing between call starts
    CallLedger* ledger = nullptr;
};

struct CallSpec {
    std::vector<prompts::Message> messages;
    GenParams params;
    uint64_t nonce = 0;
};

struct CallResult {
    std::string response;
    int attempts = 1;
    bool from_ledger = false;
};

std::string request_hash(const CallSpec& spec);

/// Executes the batch with bounded parallelism, retry with exponential
/// backoff, shared rate limiting, and ledger reuse. Results keep the
/// spec order.
std::vector<CallResult> run_calls(LlmBackend& backend, std::span<const CallSpec> specs,
                                  const CallOptions& options);

// ---------------------------------------------------------------------------
// Candidates and samples
// ---------------------------------------------------------------------------

enum class Confidence { high, low };
enum class TripletKind { script_based, script_agnostic };

std::string_view to_string(Confidence c);
std::string_view to_string(TripletKind k);
TripletKind triplet_kind_from_string(std::string_view s);
Confidence confidence_from_string(std::string_view s);

struct Triplet {
    std::string question;
    Confidence confidence = Confidence::low;
    std::string rationale;
    std::string answer;
    TripletKind kind = TripletKind::script_based;
    std::string role_name;
    int segment_index = 0;
};

enum class Category { general, specific };
enum class Source { rolegpt, context_instruct };
enum class Split { train, test, unassigned };
enum class QuestionKind { none, script_based, script_agnostic };
enum class OriginPool { train_pool, test_pool };

std::string_view to_string(Category c);
std::string_view to_string(Source s);
std::string_view to_string(Split s);
std::string_view to_string(QuestionKind k);
std::string_view to_string(OriginPool p);

struct Sample {
    std::string role_name;
    Language language = Language::en;
    std::string instruction;
    std::string response;
    Category category = Category::general;
    Source source = Source::rolegpt;
    int reference_rank = 0;  // 0 = baseline, 1..5 = ground-truth candidates
    Split split = Split::unassigned;
    QuestionKind question_kind = QuestionKind::none;
    OriginPool origin_pool = OriginPool::train_pool;
};

std::string samples_to_jsonl(std::span<const Sample> samples);
std::vector<Sample> samples_from_jsonl(const std::string& text,
                                       const std::string& origin = "<memory>");

std::string triplets_to_jsonl(std::span<const Triplet> triplets);
std::vector<Triplet> triplets_from_jsonl(const std::string& text,
                                         const std::string& origin = "<memory>");

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GeneralGenOptions {
    int k_demos = 5;
    int responses_per_instruction = 6;
    std::string user_name = "User";
    CallOptions calls;
};

struct GeneralGenReport {
    std::vector<Sample> samples;
    int backend_calls = 0;
    int ledger_hits = 0;
    int total_retries = 0;
};

/// Role prompting over general instructions: top-k dialogue rounds are
/// retrieved per instruction as fsd demonstrations, the backend sampled
/// responses_per_instruction times. The first five responses become
/// ground-truth candidates (ranks 1..5), the last one the rank-0 baseline.
GeneralGenReport generate_general(const corpus::RoleProfile& profile,
                                  std::span<const std::string> instructions,
                                  LlmBackend& backend,
                                  const GeneralGenOptions& options = {});

struct SpecificGenOptions {
    int target = 400;
    int per_script_questions = 3;
    int per_agnostic_questions = 10;
    int agnostic_calls = 20;
    int max_topup_calls = 200;
    CallOptions calls;
};

struct SpecificGenReport {
    std::vector<Triplet> triplets;
    int backend_calls = 0;
    int topup_calls = 0;
    int skipped_blocks = 0;
    int parse_failures = 0;  // calls contributing zero triplets
    int total_retries = 0;
};

/// Context-based triplet generation: one 3-candidate call per script
/// segment, 20 10-candidate calls for the description segment, then
/// script-agnostic top-up calls until the per-role target is reached.
SpecificGenReport generate_specific(const corpus::RoleProfile& profile,
                                    std::span<const seg::Segment> segments,
                                    LlmBackend& backend,
                                    const SpecificGenOptions& options = {});

struct TripletParse {
    std::vector<Triplet> triplets;
    int skipped = 0;
};

/// Lenient block parser for generated candidate text: "Question N:" /
/// "问题N：" blocks with a Factualness/Completeness line and a Response
/// body. Incomplete blocks are skipped and counted, never fatal.
TripletParse parse_triplets(const std::string& raw, TripletKind kind, Language language);

// ---------------------------------------------------------------------------
// Filtering, test assignment, cleaning
// ---------------------------------------------------------------------------

struct FilterOutcome {
    std::vector<Triplet> train;
    std::vector<Triplet> test_pool;      // low confidence + near-duplicates
    std::vector<Triplet> removed_dupes;  // bookkeeping view into test_pool
};

FilterOutcome filter_candidates(std::span<const Triplet> triplets, double dedup_threshold,
                                Language language);

/// Picks the specific-instruction test set for one role: everything when
/// the pool fits the cap, otherwise the cap-many questions least similar
/// to the retained training questions.
std::vector<Sample> build_specific_test(std::span<const Triplet> test_pool,
                                        std::span<const Triplet> train,
                                        Language language, size_t per_role_cap = 50);

std::vector<Sample> samples_from_triplets(std::span<const Triplet> triplets, Language language,
                                          Split split, OriginPool pool);

struct CleanRules {
    std::vector<std::string> ai_identity;      // lowercase substrings
    std::vector<std::string> refusal;          // lowercase substrings
    std::vector<std::string> terminal_punct;   // acceptable final code points

    static CleanRules defaults(Language language);
};

struct CleanVerdict {
    bool keep = true;
    std::string reason;  // ai_identity | role_identity | refusal | incomplete
};

/// Rule order: AI identity, role identity, refusal, completeness. Only
/// ground-truth candidates are cleaned for general samples; the rank-0
/// baseline passes through untouched.
CleanVerdict clean_sample(const Sample& sample, const CleanRules& rules);
bool should_clean(const Sample& sample);

}  // namespace roleforge::genpipe

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace roleforge {

enum class Language { en, zh };

std::string_view to_string(Language lang);
Language language_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Errors. One exception type per contract-level failure; all derive from
// Error so callers can catch the whole family at the CLI boundary.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedScript : Error { using Error::Error; };
struct RoleAbsent : Error { using Error::Error; };
struct TooFewTurns : Error { using Error::Error; };
struct InvariantViolation : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct EmptyProfile : Error { using Error::Error; };
struct DuplicateDocId : Error { using Error::Error; };
struct EmptyQuery : Error { using Error::Error; };
struct ModeMismatch : Error { using Error::Error; };
struct TooFewAnswers : Error { using Error::Error; };
struct UnknownDialect : Error { using Error::Error; };
struct BackendError : Error { using Error::Error; };
// Retryable wire-level failure; the call runner converts it into
// BackendError once the retry budget is exhausted.
struct TransportError : Error { using Error::Error; };
struct MissingReference : Error { using Error::Error; };
struct UnparseableVerdict : Error { using Error::Error; };
struct NoVerdicts : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct InsufficientRoles : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Hashing & deterministic randomness
// ---------------------------------------------------------------------------

uint64_t fnv1a64(std::string_view bytes);
uint64_t splitmix64(uint64_t x);

/// Derives an independent stream seed from a base seed and a label
/// (stage name, role name, ...). Same inputs, same seed, any platform.
uint64_t derive_seed(uint64_t base, std::string_view label);

/// Deterministic RNG with platform-independent helpers. std::mt19937_64
/// is seeded directly; bounded draws avoid std::uniform_int_distribution
/// on purpose (its output is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

    uint64_t next();
    /// Uniform in [0, n). n must be > 0.
    uint64_t below(uint64_t n);

    /// k distinct indices drawn from [0, n), returned in ascending order.
    std::vector<size_t> sample_indices(size_t n, size_t k);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    uint64_t state_;
};

// ---------------------------------------------------------------------------
// UTF-8 helpers (enough for word counting and tokenization; no ICU)
// ---------------------------------------------------------------------------

/// Decodes the code point starting at byte offset i, advancing i past it.
/// Malformed sequences decode as one byte each (U+FFFD-style salvage).
char32_t utf8_next(std::string_view s, size_t& i);

bool is_space_cp(char32_t cp);
bool is_cjk_punct_cp(char32_t cp);

void append_utf8(std::string& out, char32_t cp);

// ---------------------------------------------------------------------------
// Small string/file utilities
// ---------------------------------------------------------------------------

std::string_view trim(std::string_view s);
std::string lower_ascii(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Hex digest of a file's contents, used for content-hash staging.
std::string content_hash(const std::filesystem::path& path);
std::string hash_hex(uint64_t h);

/// Literal `{key}` substitution. Unknown braces pass through unchanged and
/// substituted values are never re-scanned.
std::string substitute(std::string_view tmpl,
                       std::span<const std::pair<std::string_view, std::string_view>> vars);

}  // namespace roleforge

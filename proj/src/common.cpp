#include "roleforge/common.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace roleforge {

std::string_view to_string(Language lang) {
    return lang == Language::en ? "en" : "zh";
}

Language language_from_string(std::string_view s) {
    if (s == "en") return Language::en;
    if (s == "zh") return Language::zh;
    throw ConfigError("unknown language tag: " + std::string(s));
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t base, std::string_view label) {
    return splitmix64(base ^ fnv1a64(label));
}

uint64_t Rng::next() {
    state_ = splitmix64(state_);
    return state_;
}

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    // Rejection sampling keeps the draw unbiased.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
}

std::vector<size_t> Rng::sample_indices(size_t n, size_t k) {
    std::vector<size_t> all(n);
    for (size_t i = 0; i < n; ++i) all[i] = i;
    if (k >= n) return all;
    // Partial Fisher-Yates: the first k slots are the sample.
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(below(n - i));
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

char32_t utf8_next(std::string_view s, size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
        ++i;
        return c;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((c & 0xe0) == 0xc0) { extra = 1; cp = c & 0x1f; }
    else if ((c & 0xf0) == 0xe0) { extra = 2; cp = c & 0x0f; }
    else if ((c & 0xf8) == 0xf0) { extra = 3; cp = c & 0x07; }
    else { ++i; return 0xfffd; }
    if (i + static_cast<size_t>(extra) >= s.size()) { ++i; return 0xfffd; }
    for (int k = 1; k <= extra; ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xc0) != 0x80) { ++i; return 0xfffd; }
        cp = (cp << 6) | (cc & 0x3f);
    }
    i += static_cast<size_t>(extra) + 1;
    return cp;
}

bool is_space_cp(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v' || cp == 0x3000 /* ideographic space */ || cp == 0x00a0;
}

bool is_cjk_punct_cp(char32_t cp) {
    switch (cp) {
        case 0x3001: case 0x3002: case 0xff0c: case 0xff0e: case 0xff01:
        case 0xff1f: case 0xff1b: case 0xff1a: case 0x201c: case 0x201d:
        case 0x2018: case 0x2019: case 0xff08: case 0xff09: case 0x300a:
        case 0x300b: case 0x3008: case 0x3009: case 0x300c: case 0x300d:
        case 0x300e: case 0x300f: case 0x2026: case 0x2014: case 0x00b7:
        case 0x3010: case 0x3011: case 0xff5e: case 0xff5b: case 0xff5d:
            return true;
        default:
            return false;
    }
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

std::string_view trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return s.substr(b, e - b);
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            std::string_view line = text.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = i + 1;
        }
    }
    if (!lines.empty() && lines.back().empty() && !text.empty() && text.back() == '\n')
        lines.pop_back();
    return lines;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string content_hash(const std::filesystem::path& path) {
    return hash_hex(fnv1a64(read_file(path)));
}

std::string substitute(std::string_view tmpl,
                       std::span<const std::pair<std::string_view, std::string_view>> vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            bool matched = false;
            for (const auto& [key, value] : vars) {
                size_t end = i + 1 + key.size();
                if (end < tmpl.size() && tmpl[end] == '}' &&
                    tmpl.compare(i + 1, key.size(), key) == 0) {
                    out.append(value);
                    i = end + 1;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

}  // namespace roleforge

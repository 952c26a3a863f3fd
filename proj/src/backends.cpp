#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "roleforge/genpipe.hpp"

using json = nlohmann::ordered_json;

namespace roleforge::genpipe {

// ---------------------------------------------------------------------------
// MockBackend
// ---------------------------------------------------------------------------

namespace {

uint64_t messages_hash(const std::vector<prompts::Message>& messages) {
    std::string buf;
    for (const auto& m : messages) {
        buf += to_string(m.speaker);
        buf += '\x1f';
        buf += m.text;
        buf += '\x1e';
    }
    return fnv1a64(buf);
}

std::string flatten(const std::vector<prompts::Message>& messages) {
    std::string all;
    for (const auto& m : messages) {
        all += m.text;
        all += '\n';
    }
    return all;
}

int first_int_after(const std::string& text, std::string_view marker, int fallback) {
    size_t pos = text.find(marker);
    if (pos == std::string::npos) return fallback;
    for (size_t i = pos + marker.size(); i < text.size() && i < pos + marker.size() + 80; ++i) {
        if (text[i] >= '0' && text[i] <= '9') {
            int v = 0;
            while (i < text.size() && text[i] >= '0' && text[i] <= '9')
                v = v * 10 + (text[i++] - '0');
            return v;
        }
    }
    return fallback;
}

std::vector<std::string> extract_model_names(const std::string& text) {
    std::vector<std::string> names;
    size_t pos = 0;
    while ((pos = text.find("\"model\"", pos)) != std::string::npos) {
        size_t open = pos + 7;
        while (open < text.size() && (text[open] == ':' || text[open] == ' ')) ++open;
        // the template's own format line has "<model-name>" here, not a string
        if (open >= text.size() || text[open] != '"') {
            pos += 7;
            continue;
        }
        size_t close = text.find('"', open + 1);
        if (close == std::string::npos) break;
        names.push_back(text.substr(open + 1, close - open - 1));
        pos = close + 1;
    }
    return names;
}

}  // namespace

std::string MockBackend::complete(const std::vector<prompts::Message>& messages,
                                  const GenParams& params, uint64_t nonce) {
    (void)params;
    std::lock_guard<std::mutex> lock(mu_);
    ++calls_seen_;
    if (transport_failures_ > 0) {
        --transport_failures_;
        throw TransportError("mock transport failure");
    }

    const std::string all = flatten(messages);
    const uint64_t h = splitmix64(messages_hash(messages) ^ splitmix64(seed_) ^
                                  splitmix64(nonce + 0x51ede852ull));

    bool judge = all.find("\"model\": <model-name>") != std::string::npos ||
                 all.find("排名") != std::string::npos;
    if (judge) {
        auto names = extract_model_names(all);
        std::sort(names.begin(), names.end());
        json verdict = json::array();
        for (size_t i = 0; i < names.size(); ++i)
            verdict.push_back(json{{"model", names[i]},
                                   {"reason", "mock ranking " + hash_hex(h).substr(0, 6)},
                                   {"rank", static_cast<int>(i) + 1}});
        return verdict.dump();
    }

    bool triplet_en = all.find("[Question Design") != std::string::npos;
    bool triplet_zh = all.find("[问题设计") != std::string::npos;
    if (triplet_en || triplet_zh) {
        if (garbled_calls_ > 0) {
            --garbled_calls_;
            return "mock garbled output without any recognizable structure";
        }
        int count = triplet_zh ? first_int_after(all, "[问题设计", 3)
                               : first_int_after(all, "[Question Design", 3);
        bool script = all.find("[Script Content]") != std::string::npos ||
                      all.find("[剧本内容]") != std::string::npos;
        std::string out;
        for (int i = 1; i <= count; ++i) {
            uint64_t q = splitmix64(h + static_cast<uint64_t>(i));
            bool low = low_every_ > 0 && q % static_cast<uint64_t>(low_every_) == 0;
            std::string tag = hash_hex(q).substr(0, 8);
            if (triplet_zh) {
                out += "问题" + std::to_string(i) + "：模拟问题" + tag + "，你当时做了什么？\n";
                out += std::string("真实性：") + (low ? "低" : "高") + "(模拟理由" + tag + ")。\n";
                out += "回复：模拟回答" + tag + "。\n\n";
            } else {
                const char* label = script ? "Completeness" : "Factualness";
                out += "Question " + std::to_string(i) + ": What happened in mock scene " + tag +
                       "?\n";
                out += std::string(label) + ": " + (low ? "Low" : "High") +
                       ", because mock rationale " + tag + ".\n";
                out += "Response: A mock recollection of scene " + tag + ".\n\n";
            }
        }
        return out;
    }

    std::string tag = hash_hex(h).substr(0, 10);
    return "Quite settled, the matter of " + tag + " is resolved.";
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

std::string HttpBackend::complete(const std::vector<prompts::Message>& messages,
                                  const GenParams& params, uint64_t nonce) {
    (void)nonce;
    json body;
    if (!config_.model.empty()) body["model"] = config_.model;
    body["messages"] = json::array();
    for (const auto& m : messages)
        body["messages"].push_back(json{{"role", std::string(to_string(m.speaker))},
                                        {"content", m.text}});
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    body["frequency_penalty"] = params.frequency_penalty;
    body["presence_penalty"] = params.presence_penalty;

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("http request failed: " + httplib::to_string(res.error()));
    if (res->status >= 500)
        throw TransportError("http " + std::to_string(res->status) + ": " + res->body);
    if (res->status != 200)
        throw BackendError("http " + std::to_string(res->status) + ": " + res->body);
    try {
        json doc = json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed completion response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

CallLedger::CallLedger(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    const std::string text = read_file(path_);
    for (std::string_view line : split_lines(text)) {
        if (trim(line).empty()) continue;
        json rec = json::parse(line);
        LedgerEntry e;
        e.request_hash = rec.at("request_hash").get<std::string>();
        e.backend = rec.at("backend").get<std::string>();
        e.response = rec.at("response").get<std::string>();
        e.latency_ms = rec.at("latency_ms").get<double>();
        e.attempts = rec.at("attempts").get<int>();
        by_hash_[e.request_hash] = entries_.size();
        entries_.push_back(std::move(e));
    }
}

std::optional<std::string> CallLedger::lookup(const std::string& request_hash) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = by_hash_.find(request_hash);
    if (it == by_hash_.end()) return std::nullopt;
    return entries_[it->second].response;
}

void CallLedger::record(const LedgerEntry& entry) {
    std::lock_guard<std::mutex> lock(mu_);
    if (by_hash_.count(entry.request_hash)) return;
    json rec = {{"request_hash", entry.request_hash},
                {"backend", entry.backend},
                {"params",
                 {{"temperature", entry.params.temperature},
                  {"top_p", entry.params.top_p},
                  {"max_tokens", entry.params.max_tokens},
                  {"frequency_penalty", entry.params.frequency_penalty},
                  {"presence_penalty", entry.params.presence_penalty}}},
                {"response", entry.response},
                {"latency_ms", entry.latency_ms},
                {"attempts", entry.attempts}};
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to ledger " + path_.string());
    out << rec.dump() << '\n';
    by_hash_[entry.request_hash] = entries_.size();
    entries_.push_back(entry);
}

int CallLedger::total_retries() const {
    std::lock_guard<std::mutex> lock(mu_);
    int n = 0;
    for (const auto& e : entries_) n += e.attempts - 1;
    return n;
}

// ---------------------------------------------------------------------------
// Call runner
// ---------------------------------------------------------------------------

std::string request_hash(const CallSpec& spec) {
    std::ostringstream ss;
    ss << messages_hash(spec.messages) << '|' << spec.params.temperature << '|'
       << spec.params.top_p << '|' << spec.params.max_tokens << '|'
       << spec.params.frequency_penalty << '|' << spec.params.presence_penalty << '|'
       << spec.nonce;
    return hash_hex(fnv1a64(ss.str()));
}

std::vector<CallResult> run_calls(LlmBackend& backend, std::span<const CallSpec> specs,
                                  const CallOptions& options) {
    std::vector<CallResult> results(specs.size());
    std::atomic<size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::exception_ptr first_error;

    std::mutex rate_mu;
    auto next_start = std::chrono::steady_clock::now();
    auto pace = [&] {
        if (options.min_interval_ms <= 0) return;
        std::unique_lock<std::mutex> lock(rate_mu);
        auto now = std::chrono::steady_clock::now();
        auto slot = std::max(now, next_start);
        next_start = slot + std::chrono::milliseconds(options.min_interval_ms);
        lock.unlock();
        std::this_thread::sleep_until(slot);
    };

    auto worker = [&] {
        while (!failed.load()) {
            size_t i = cursor.fetch_add(1);
            if (i >= specs.size()) return;
            const CallSpec& spec = specs[i];
            const std::string hash = request_hash(spec);
            try {
                if (options.ledger) {
                    if (auto cached = options.ledger->lookup(hash)) {
                        results[i] = {*cached, 0, true};
                        continue;
                    }
                }
                int attempts = 0;
                int delay = options.retry.base_delay_ms;
                for (;;) {
                    ++attempts;
                    try {
                        pace();
                        auto t0 = std::chrono::steady_clock::now();
                        std::string response = backend.complete(spec.messages, spec.params,
                                                                spec.nonce);
                        auto t1 = std::chrono::steady_clock::now();
                        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                        results[i] = {response, attempts, false};
                        if (options.ledger)
                            options.ledger->record(
                                {hash, backend.name(), spec.params, response, ms, attempts});
                        break;
                    } catch (const TransportError& e) {
                        if (attempts >= options.retry.max_attempts)
                            throw BackendError("backend failed after " +
                                               std::to_string(attempts) +
                                               " attempts: " + e.what());
                        if (delay > 0)
                            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
                        delay = static_cast<int>(delay * options.retry.multiplier);
                    }
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    int threads = std::max(1, options.parallelism);
    if (threads == 1 || specs.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace roleforge::genpipe

#pragma once

// Completion gateway: plans a campaign over gene pairs x prompt variants x
// repetitions, obtains completions from a chat endpoint or a mock backend,
// caches them by digest, and assembles probability matrices.
//
// Every request is identified by a digest of (prompt text, model,
// temperature, max_new_tokens, repetition). The cache is an append-only
// JSONL file keyed by that digest, so an interrupted campaign resumes by
// rerunning: cached entries are never re-requested.
//
// Each completion request is a fresh, stateless conversation: the request
// body contains only the one rendered prompt (plus an optional system
// message carrying the persona), never any prior exchange.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "causalbench/core.hpp"
#include "causalbench/detail/sha256.hpp"
#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/prompt.hpp"

namespace causalbench {

struct EndpointConfig {
    std::string base_url;                 // scheme://host[:port]
    std::string model_name = "gemma-2-9b-it";
    double temperature = 0.7;
    std::chrono::milliseconds request_timeout{30000};
    std::size_t max_concurrency = 4;
    double requests_per_minute = 0.0;     // 0 disables rate limiting
    std::size_t max_retries = 3;          // extra attempts after the first
    std::chrono::milliseconds retry_backoff{250};
    std::string api_key;                  // sent as a bearer token when set
};

inline std::string completion_digest(std::string_view prompt_text, std::string_view model,
                                     double temperature, int max_new_tokens,
                                     std::size_t repetition) {
    char temp_buf[32];
    std::snprintf(temp_buf, sizeof(temp_buf), "%.17g", temperature);
    detail::Sha256 h;
    const char sep = '\x1f';
    h.update(prompt_text);
    h.update(&sep, 1);
    h.update(model);
    h.update(&sep, 1);
    h.update(std::string_view(temp_buf));
    h.update(&sep, 1);
    const std::string tokens = std::to_string(max_new_tokens);
    h.update(tokens);
    h.update(&sep, 1);
    const std::string rep = std::to_string(repetition);
    h.update(rep);
    return detail::to_hex(h.digest());
}

struct ParsedProbability {
    double value = 0.0;
    bool ok = false;
};

// Extracts the number after the final "Probability =" in a completion,
// tolerating flexible whitespace and trailing punctuation, and clips it to
// [0, 1]. Any completion without a parsable probability yields (0, false).
inline ParsedProbability parse_probability(std::string_view raw) {
    const std::string_view needle = "Probability";
    const std::size_t at = raw.rfind(needle);
    if (at == std::string_view::npos) return {};
    std::size_t pos = at + needle.size();
    while (pos < raw.size() && (raw[pos] == ' ' || raw[pos] == '\t')) ++pos;
    if (pos >= raw.size() || raw[pos] != '=') return {};
    ++pos;
    const std::string tail(raw.substr(pos));
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    if (end == tail.c_str() || !std::isfinite(v)) return {};
    return {std::clamp(v, 0.0, 1.0), true};
}

struct PlanEntry {
    std::size_t source = 0;      // candidate cause, panel index
    std::size_t dest = 0;        // candidate effect, panel index
    PromptVariant variant;
    std::size_t repetition = 0;
    std::string digest;
};

struct CompletionRecord {
    std::string digest;
    std::string gene_a;
    std::string gene_b;
    std::string variant;
    std::size_t repetition = 0;
    std::string model;
    double temperature = 0.0;
    int max_new_tokens = 0;
    std::string raw_text;
    double parsed_probability = 0.0;
    bool parse_ok = false;
    double latency_ms = 0.0;
};

namespace detail_gateway {

inline nlohmann::json record_to_json(const CompletionRecord& r) {
    return nlohmann::json{{"digest", r.digest},
                          {"gene_a", r.gene_a},
                          {"gene_b", r.gene_b},
                          {"variant", r.variant},
                          {"repetition", r.repetition},
                          {"model", r.model},
                          {"temperature", r.temperature},
                          {"max_new_tokens", r.max_new_tokens},
                          {"raw_text", r.raw_text},
                          {"parsed_probability", r.parsed_probability},
                          {"parse_ok", r.parse_ok},
                          {"latency_ms", r.latency_ms}};
}

inline CompletionRecord record_from_json(const nlohmann::json& j) {
    CompletionRecord r;
    r.digest = j.at("digest").get<std::string>();
    r.gene_a = j.value("gene_a", std::string{});
    r.gene_b = j.value("gene_b", std::string{});
    r.variant = j.value("variant", std::string{});
    r.repetition = j.value("repetition", std::size_t{0});
    r.model = j.value("model", std::string{});
    r.temperature = j.value("temperature", 0.0);
    r.max_new_tokens = j.value("max_new_tokens", 0);
    r.raw_text = j.at("raw_text").get<std::string>();
    r.parsed_probability = j.value("parsed_probability", 0.0);
    r.parse_ok = j.value("parse_ok", false);
    r.latency_ms = j.value("latency_ms", 0.0);
    return r;
}

}  // namespace detail_gateway

// Append-only JSONL completion store keyed by digest. Reloading a file with
// duplicate digests keeps the latest line.
class CompletionCache {
  public:
    explicit CompletionCache(std::filesystem::path path) : path_(std::move(path)) {
        if (!std::filesystem::exists(path_)) return;
        std::ifstream in(path_);
        if (!in) throw DataError("cannot open completion cache: " + path_.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (detail::trim(line).empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                auto record = detail_gateway::record_from_json(j);
                std::string digest = record.digest;
                by_digest_[std::move(digest)] = std::move(record);
            } catch (const std::exception& e) {
                throw CacheIntegrityError(path_.string() + ":" + std::to_string(line_no) +
                                          ": corrupt cache line: " + e.what());
            }
        }
    }

    std::optional<CompletionRecord> find(const std::string& digest) const {
        std::lock_guard<std::mutex> lock(mu_);
        const auto it = by_digest_.find(digest);
        if (it == by_digest_.end()) return std::nullopt;
        return it->second;
    }

    void append(const CompletionRecord& record) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!out_.is_open()) {
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            out_.open(path_, std::ios::app);
            if (!out_) throw DataError("cannot append to completion cache: " + path_.string());
        }
        out_ << detail_gateway::record_to_json(record).dump() << '\n';
        out_.flush();
        if (!out_) throw DataError("short write to completion cache: " + path_.string());
        by_digest_[record.digest] = record;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return by_digest_.size();
    }

    const std::filesystem::path& path() const noexcept { return path_; }

  private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, CompletionRecord> by_digest_;
    std::ofstream out_;
};

// Request pacing. acquire() admits roughly per_minute requests per minute
// with bursts up to the bucket capacity; a non-positive rate disables
// pacing. The clock and sleeper are injectable for tests.
class TokenBucket {
  public:
    using Clock = std::chrono::steady_clock;
    using NowFn = std::function<Clock::time_point()>;
    using SleepFn = std::function<void(std::chrono::duration<double>)>;

    explicit TokenBucket(double per_minute, double burst = 1.0, NowFn now = nullptr,
                         SleepFn sleeper = nullptr)
        : rate_per_sec_(per_minute / 60.0),
          burst_(std::max(burst, 1.0)),
          tokens_(std::max(burst, 1.0)),
          now_(now ? std::move(now) : [] { return Clock::now(); }),
          sleep_(sleeper ? std::move(sleeper)
                         : [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); }) {
        last_refill_ = now_();
    }

    void acquire() {
        if (rate_per_sec_ <= 0.0) return;
        std::lock_guard<std::mutex> lock(mu_);
        refill();
        while (tokens_ < 1.0) {
            const double deficit = 1.0 - tokens_;
            sleep_(std::chrono::duration<double>(deficit / rate_per_sec_));
            refill();
        }
        tokens_ -= 1.0;
    }

  private:
    void refill() {
        const auto now = now_();
        const std::chrono::duration<double> elapsed = now - last_refill_;
        last_refill_ = now;
        tokens_ = std::min(burst_, tokens_ + elapsed.count() * rate_per_sec_);
    }

    double rate_per_sec_;
    double burst_;
    double tokens_;
    NowFn now_;
    SleepFn sleep_;
    Clock::time_point last_refill_;
    std::mutex mu_;
};

// One completion provider. complete() must treat every call as an isolated
// conversation.
class CompletionBackend {
  public:
    virtual ~CompletionBackend() = default;
    virtual std::string complete(const RenderedPrompt& prompt, std::size_t repetition,
                                 const std::string& digest) = 0;
    virtual std::string describe() const = 0;
};

// Answers from a known graph: strong yes for true edges, strong no
// otherwise. Evaluating against the same graph must give AUROC 1.
class OracleMockBackend final : public CompletionBackend {
  public:
    OracleMockBackend(CausalGraph truth, GenePanel panel)
        : truth_(std::move(truth)), panel_(std::move(panel)) {
        if (truth_.node_count() != panel_.size()) {
            throw ShapeError("oracle mock: graph size does not match panel");
        }
    }

    std::string complete(const RenderedPrompt& prompt, std::size_t, const std::string&) override {
        const bool edge = truth_.edge(panel_.index_of(prompt.gene_a), panel_.index_of(prompt.gene_b));
        return edge ? "Probability = 0.99" : "Probability = 0.01";
    }

    std::string describe() const override { return "mock:oracle"; }

  private:
    CausalGraph truth_;
    GenePanel panel_;
};

class ConstantMockBackend final : public CompletionBackend {
  public:
    explicit ConstantMockBackend(double value) : value_(value) {
        if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("constant mock value must lie in [0, 1]");
    }

    std::string complete(const RenderedPrompt&, std::size_t, const std::string&) override {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "Probability = %.2f", value_);
        return buf;
    }

    std::string describe() const override { return "mock:constant"; }

  private:
    double value_;
};

// Uniform probabilities derived from (request digest, seed) via SHA-256, so
// values are reproducible across platforms and independent per repetition.
class SeededRandomMockBackend final : public CompletionBackend {
  public:
    explicit SeededRandomMockBackend(std::uint64_t seed) : seed_(seed) {}

    std::string complete(const RenderedPrompt&, std::size_t, const std::string& digest) override {
        const std::uint64_t u = detail::sha256_prefix_u64(digest + ":" + std::to_string(seed_));
        const double v = static_cast<double>(u) / 18446744073709551616.0;  // 2^64
        char buf[32];
        std::snprintf(buf, sizeof(buf), "Probability = %.2f", v);
        return buf;
    }

    std::string describe() const override { return "mock:seeded_random:" + std::to_string(seed_); }

  private:
    std::uint64_t seed_;
};

// Replays recorded completions by digest; a digest absent from the corpus
// is an error, so replays never silently invent data.
class CorpusMockBackend final : public CompletionBackend {
  public:
    explicit CorpusMockBackend(std::unordered_map<std::string, std::string> by_digest,
                               std::string source = "corpus")
        : by_digest_(std::move(by_digest)), source_(std::move(source)) {}

    static CorpusMockBackend load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open completion corpus: " + path.string());
        std::unordered_map<std::string, std::string> by_digest;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (detail::trim(line).empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                by_digest[j.at("digest").get<std::string>()] = j.at("raw_text").get<std::string>();
            } catch (const std::exception& e) {
                throw DataError(path.string() + ":" + std::to_string(line_no) +
                                ": corrupt corpus line: " + e.what());
            }
        }
        return CorpusMockBackend(std::move(by_digest), path.string());
    }

    std::string complete(const RenderedPrompt& prompt, std::size_t repetition,
                         const std::string& digest) override {
        const auto it = by_digest_.find(digest);
        if (it == by_digest_.end()) {
            throw CorpusMissError("corpus " + source_ + " has no completion for digest " + digest +
                                  " (pair " + prompt.gene_a + " -> " + prompt.gene_b + ", variant " +
                                  to_string(prompt.variant) + ", repetition " +
                                  std::to_string(repetition) + ")");
        }
        return it->second;
    }

    std::string describe() const override { return "mock:corpus:" + source_; }

    std::size_t size() const noexcept { return by_digest_.size(); }

  private:
    std::unordered_map<std::string, std::string> by_digest_;
    std::string source_;
};

// Deterministic plan: variants in the given order, then source-major /
// dest-minor ordered pairs, then repetitions.
inline std::vector<PlanEntry> build_campaign_plan(const GenePanel& panel,
                                                  std::span<const PromptVariant> variants,
                                                  std::size_t repetitions,
                                                  const GeneContextBundle& bundle,
                                                  const EndpointConfig& endpoint,
                                                  const TemplateSet& templates = TemplateSet::builtin(),
                                                  const RenderOptions& render_options = {}) {
    if (panel.size() < 2) throw PanelError("campaign plan requires at least two genes");
    if (repetitions == 0) throw ConfigError("campaign plan requires at least one repetition");
    std::vector<PlanEntry> plan;
    plan.reserve(panel.size() * (panel.size() - 1) * variants.size() * repetitions);
    for (const auto& variant : variants) {
        for (std::size_t i = 0; i < panel.size(); ++i) {
            for (std::size_t j = 0; j < panel.size(); ++j) {
                if (i == j) continue;
                const auto rendered = render_prompt(panel.symbol(i), panel.symbol(j), variant,
                                                    bundle, templates, render_options);
                for (std::size_t r = 0; r < repetitions; ++r) {
                    PlanEntry e;
                    e.source = i;
                    e.dest = j;
                    e.variant = variant;
                    e.repetition = r;
                    e.digest = completion_digest(rendered.text, endpoint.model_name,
                                                 endpoint.temperature, rendered.max_new_tokens, r);
                    plan.push_back(std::move(e));
                }
            }
        }
    }
    return plan;
}

inline void save_campaign_plan(const std::string& path, std::span<const PlanEntry> plan,
                               const GenePanel& panel) {
    std::ostringstream out;
    out << "source,dest,variant,repetition,digest\n";
    for (const auto& e : plan) {
        out << panel.symbol(e.source) << ',' << panel.symbol(e.dest) << ',' << to_string(e.variant)
            << ',' << e.repetition << ',' << e.digest << '\n';
    }
    detail::write_file(path, out.str());
}

struct VariantRunResult {
    PromptVariant variant;
    std::vector<ProbabilityMatrix> per_repetition;
    std::size_t completions = 0;
    std::size_t parse_failures = 0;

    double parse_failure_rate() const {
        return completions == 0 ? 0.0
                                : static_cast<double>(parse_failures) / static_cast<double>(completions);
    }
};

struct CampaignResult {
    std::vector<VariantRunResult> variants;  // plan variant order
    std::size_t cache_hits = 0;
    std::size_t backend_calls = 0;
};

inline CampaignResult run_campaign(const GenePanel& panel, std::span<const PlanEntry> plan,
                                   const GeneContextBundle& bundle, CompletionBackend& backend,
                                   CompletionCache* cache, const EndpointConfig& endpoint,
                                   const TemplateSet& templates = TemplateSet::builtin(),
                                   const RenderOptions& render_options = {}) {
    CampaignResult result;
    if (plan.empty()) return result;

    // Records per plan slot; workers fill slots independently so the
    // assembly below is identical for any completion order.
    std::vector<CompletionRecord> records(plan.size());
    std::vector<std::size_t> pending;
    for (std::size_t idx = 0; idx < plan.size(); ++idx) {
        if (cache != nullptr) {
            if (auto hit = cache->find(plan[idx].digest)) {
                records[idx] = std::move(*hit);
                ++result.cache_hits;
                continue;
            }
        }
        pending.push_back(idx);
    }

    // Prompts are identical across repetitions, so render each
    // (pair, variant) once.
    std::map<std::tuple<std::size_t, std::size_t, PromptVariant>, RenderedPrompt> rendered;
    for (const std::size_t idx : pending) {
        const auto& e = plan[idx];
        const auto key = std::make_tuple(e.source, e.dest, e.variant);
        if (rendered.find(key) == rendered.end()) {
            rendered.emplace(key, render_prompt(panel.symbol(e.source), panel.symbol(e.dest),
                                                e.variant, bundle, templates, render_options));
        }
    }

    TokenBucket bucket(endpoint.requests_per_minute,
                       std::max(1.0, endpoint.requests_per_minute / 60.0));
    std::mutex error_mu;
    std::size_t first_error_idx = plan.size();
    std::exception_ptr first_error;
    std::atomic<bool> halt{false};
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> calls{0};

    const auto worker = [&] {
        while (!halt.load()) {
            const std::size_t p = next.fetch_add(1);
            if (p >= pending.size()) return;
            const std::size_t idx = pending[p];
            const auto& e = plan[idx];
            const auto& prompt = rendered.at(std::make_tuple(e.source, e.dest, e.variant));
            try {
                bucket.acquire();
                const auto t0 = std::chrono::steady_clock::now();
                std::string raw = backend.complete(prompt, e.repetition, e.digest);
                const auto t1 = std::chrono::steady_clock::now();
                calls.fetch_add(1);
                const auto parsed = parse_probability(raw);
                CompletionRecord r;
                r.digest = e.digest;
                r.gene_a = prompt.gene_a;
                r.gene_b = prompt.gene_b;
                r.variant = to_string(e.variant);
                r.repetition = e.repetition;
                r.model = endpoint.model_name;
                r.temperature = endpoint.temperature;
                r.max_new_tokens = prompt.max_new_tokens;
                r.raw_text = std::move(raw);
                r.parsed_probability = parsed.value;
                r.parse_ok = parsed.ok;
                r.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                if (cache != nullptr) cache->append(r);
                records[idx] = std::move(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error || idx < first_error_idx) {
                    first_error = std::current_exception();
                    first_error_idx = idx;
                }
                halt.store(true);
                return;
            }
        }
    };

    const std::size_t thread_count =
        std::max<std::size_t>(1, std::min(endpoint.max_concurrency, pending.size()));
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> workers;
        for (std::size_t t = 0; t < thread_count; ++t) workers.emplace_back(worker);
        for (auto& w : workers) w.join();
    }
    result.backend_calls = calls.load();
    if (first_error) {
        // Completed work is already in the cache, so a rerun resumes from
        // this point instead of repeating it.
        std::rethrow_exception(first_error);
    }

    // Deterministic assembly keyed by plan order.
    std::map<PromptVariant, std::size_t> variant_slot;
    std::size_t repetitions = 0;
    for (const auto& e : plan) repetitions = std::max(repetitions, e.repetition + 1);
    for (const auto& e : plan) {
        if (variant_slot.find(e.variant) == variant_slot.end()) {
            variant_slot.emplace(e.variant, result.variants.size());
            VariantRunResult v;
            v.variant = e.variant;
            v.per_repetition.assign(repetitions, ProbabilityMatrix(panel.size()));
            result.variants.push_back(std::move(v));
        }
    }
    for (std::size_t idx = 0; idx < plan.size(); ++idx) {
        const auto& e = plan[idx];
        const auto& r = records[idx];
        auto& v = result.variants[variant_slot.at(e.variant)];
        v.per_repetition[e.repetition].set(e.source, e.dest, r.parsed_probability);
        ++v.completions;
        if (!r.parse_ok) ++v.parse_failures;
    }
    return result;
}

}  // namespace causalbench

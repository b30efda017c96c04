#pragma once

// PubTator3 literature retrieval.
//
// One search per (pair, relation type):
//   GET {base_url}/search/?text=relations:{relation}|@GENE_{A}|@GENE_{B}
// The response's "results" array yields one passage per item: text from
// "text_hl" with the <m>...</m> highlight markers stripped, falling back to
// "text"; the article id from "pmid". Only the first page is consumed;
// downstream rendering caps passages anyway.
//
// Results are appended to an EvidenceCache, and cached pairs are never
// re-fetched, so a populated cache works fully offline (offline mode makes
// a cache miss an error instead of a network call).

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "causalbench/errors.hpp"
#include "causalbench/knowledge.hpp"
#include "causalbench/llm_gateway.hpp"

namespace causalbench {

struct PubTatorConfig {
    std::string base_url = "https://www.ncbi.nlm.nih.gov/research/pubtator3-api";
    std::chrono::milliseconds request_timeout{30000};
    std::size_t max_retries = 3;
    std::chrono::milliseconds retry_backoff{250};
    double requests_per_minute = 0.0;  // 0 disables pacing
    bool offline = false;
};

namespace detail_pubtator {

inline std::string strip_highlight(std::string text) {
    for (const std::string_view marker : {"<m>", "</m>"}) {
        std::size_t pos = 0;
        while ((pos = text.find(marker, pos)) != std::string::npos) {
            text.erase(pos, marker.size());
        }
    }
    return text;
}

inline std::string url_encode(std::string_view value) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (const char c : value) {
        const bool safe = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                          (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.' || c == '~';
        if (safe) {
            out.push_back(c);
        } else {
            out.push_back('%');
            out.push_back(hex[(static_cast<unsigned char>(c) >> 4) & 0x0f]);
            out.push_back(hex[static_cast<unsigned char>(c) & 0x0f]);
        }
    }
    return out;
}

inline std::vector<Passage> parse_search_response(const std::string& body,
                                                  const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const std::exception& e) {
        throw RetrievalError("malformed search response: " + std::string(e.what()) + context);
    }
    std::vector<Passage> out;
    if (!j.contains("results")) return out;
    for (const auto& item : j["results"]) {
        Passage p;
        if (item.contains("text_hl") && item["text_hl"].is_string()) {
            p.text = strip_highlight(item["text_hl"].get<std::string>());
        } else if (item.contains("text") && item["text"].is_string()) {
            p.text = item["text"].get<std::string>();
        } else {
            continue;
        }
        if (item.contains("pmid")) {
            if (item["pmid"].is_string()) {
                p.article_id = item["pmid"].get<std::string>();
            } else if (item["pmid"].is_number_integer()) {
                p.article_id = std::to_string(item["pmid"].get<std::int64_t>());
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace detail_pubtator

class PubTatorClient {
  public:
    explicit PubTatorClient(PubTatorConfig config)
        : config_(std::move(config)),
          bucket_(config_.requests_per_minute,
                  std::max(1.0, config_.requests_per_minute / 60.0)) {}

    // Evidence for one ordered pair across the requested relation types, in
    // the requested order. Cached entries are reused verbatim.
    std::vector<LiteratureEvidence> fetch(const std::string& gene_a, const std::string& gene_b,
                                          std::span<const RelationType> relations,
                                          EvidenceCache* cache) {
        std::vector<LiteratureEvidence> out;
        for (const auto relation : relations) {
            if (cache != nullptr) {
                if (auto hit = cache->find(gene_a, gene_b, relation)) {
                    out.push_back(std::move(*hit));
                    continue;
                }
            }
            if (config_.offline) {
                throw RetrievalError("offline mode: evidence for " + gene_a + "/" + gene_b + "/" +
                                     std::string(to_string(relation)) + " is not cached");
            }
            LiteratureEvidence ev;
            ev.gene_a = gene_a;
            ev.gene_b = gene_b;
            ev.relation = relation;
            ev.passages = search(gene_a, gene_b, relation);
            if (cache != nullptr) cache->append(ev);
            out.push_back(std::move(ev));
        }
        return out;
    }

  private:
    std::vector<Passage> search(const std::string& gene_a, const std::string& gene_b,
                                RelationType relation) {
        const std::string query =
            "relations:" + std::string(to_string(relation)) + "|@GENE_" + gene_a + "|@GENE_" + gene_b;
        const std::string path = "/search/?text=" + detail_pubtator::url_encode(query);
        const std::string context =
            " (pair " + gene_a + "/" + gene_b + ", relation " + std::string(to_string(relation)) + ")";

        auto backoff = config_.retry_backoff;
        std::string last_failure;
        for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            bucket_.acquire();
            httplib::Client client(config_.base_url);
            const auto seconds_part =
                std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
            const auto micros_part = std::chrono::duration_cast<std::chrono::microseconds>(
                config_.request_timeout - seconds_part);
            client.set_connection_timeout(seconds_part.count(), micros_part.count());
            client.set_read_timeout(seconds_part.count(), micros_part.count());
            client.set_follow_location(true);
            auto res = client.Get(path);
            if (!res) {
                last_failure = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_failure = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw RetrievalError("search rejected with HTTP " + std::to_string(res->status) +
                                     context);
            }
            return detail_pubtator::parse_search_response(res->body, context);
        }
        throw RetrievalError(last_failure + " after " + std::to_string(config_.max_retries + 1) +
                             " attempts" + context);
    }

    PubTatorConfig config_;
    TokenBucket bucket_;
};

}  // namespace causalbench

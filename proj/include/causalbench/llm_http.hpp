#pragma once

// Chat-completions HTTP backend (POST {base_url}/v1/chat/completions).
//
// Retry policy: transport failures, HTTP 429 and HTTP 5xx are retried up to
// max_retries extra attempts with doubling backoff; other non-2xx statuses
// fail immediately with the server's error message when one is present.
// Timeouts surface as TimeoutError, other exhausted transport failures as
// TransportError, and HTTP-level failures as EndpointError.

#include <atomic>
#include <chrono>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "causalbench/errors.hpp"
#include "causalbench/llm_gateway.hpp"

namespace causalbench {

class HttpBackend final : public CompletionBackend {
  public:
    explicit HttpBackend(EndpointConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) {
            throw ConfigError("HTTP backend requires a base URL (flag or CAUSALBENCH_BASE_URL)");
        }
    }

    std::string complete(const RenderedPrompt& prompt, std::size_t repetition,
                         const std::string& digest) override {
        nlohmann::json messages = nlohmann::json::array();
        if (!prompt.system_text.empty()) {
            messages.push_back({{"role", "system"}, {"content", prompt.system_text}});
        }
        messages.push_back({{"role", "user"}, {"content", prompt.user_text}});
        const nlohmann::json body = {{"model", config_.model_name},
                                     {"messages", messages},
                                     {"max_tokens", prompt.max_new_tokens},
                                     {"temperature", config_.temperature}};
        const std::string payload = body.dump();
        const std::string context = " (digest " + digest + ", pair " + prompt.gene_a + " -> " +
                                    prompt.gene_b + ", repetition " + std::to_string(repetition) + ")";

        auto backoff = config_.retry_backoff;
        bool saw_timeout = false;
        std::string last_failure;
        for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            ++attempts_;
            httplib::Client client(config_.base_url);
            const auto seconds_part =
                std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
            const auto micros_part = std::chrono::duration_cast<std::chrono::microseconds>(
                config_.request_timeout - seconds_part);
            client.set_connection_timeout(seconds_part.count(), micros_part.count());
            client.set_read_timeout(seconds_part.count(), micros_part.count());
            client.set_write_timeout(seconds_part.count(), micros_part.count());
            httplib::Headers headers;
            if (!config_.api_key.empty()) {
                headers.emplace("Authorization", "Bearer " + config_.api_key);
            }
            auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
            if (!res) {
                const auto err = res.error();
                saw_timeout = saw_timeout || err == httplib::Error::ConnectionTimeout ||
                              err == httplib::Error::Read || err == httplib::Error::Write;
                last_failure = "transport failure: " + httplib::to_string(err);
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_failure = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw EndpointError("endpoint rejected request with HTTP " +
                                    std::to_string(res->status) + ": " + server_message(res->body) +
                                    context);
            }
            return extract_content(res->body, context);
        }
        const std::string detail =
            last_failure + " after " + std::to_string(config_.max_retries + 1) + " attempts" + context;
        if (saw_timeout) throw TimeoutError(detail);
        if (detail_gateway_is_http(last_failure)) throw EndpointError(detail);
        throw TransportError(detail);
    }

    std::string describe() const override { return "http:" + config_.base_url; }

    // Total request attempts issued, including retries.
    std::size_t attempts() const noexcept { return attempts_; }

  private:
    static bool detail_gateway_is_http(const std::string& failure) {
        return failure.rfind("HTTP ", 0) == 0;
    }

    static std::string server_message(const std::string& body) {
        try {
            const auto j = nlohmann::json::parse(body);
            if (j.contains("error") && j["error"].contains("message")) {
                return j["error"]["message"].get<std::string>();
            }
        } catch (const std::exception&) {
        }
        return body.empty() ? "(no body)" : body;
    }

    static std::string extract_content(const std::string& body, const std::string& context) {
        try {
            const auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw EndpointError(std::string("malformed completion response: ") + e.what() + context);
        }
    }

    EndpointConfig config_;
    std::atomic<std::size_t> attempts_{0};
};

}  // namespace causalbench

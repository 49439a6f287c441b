#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#if !defined(CPPHTTPLIB_OPENSSL_SUPPORT) && __has_include(<openssl/ssl.h>)
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "marc/core.hpp"

namespace marc {

// ---------------------------------------------------------------------------
// Generation parameters

enum class Stage : int {
    SpecialistAnswer = 0,
    CurationLetter = 1,
    VerifyQuestions = 2,
    VerifyIndependent = 3,
    VerifyReference = 4,
};

inline constexpr std::array<Stage, 5> kAllStages = {
    Stage::SpecialistAnswer, Stage::CurationLetter, Stage::VerifyQuestions,
    Stage::VerifyIndependent, Stage::VerifyReference};

inline std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::SpecialistAnswer:  return "specialist_answer";
        case Stage::CurationLetter:    return "curation_letter";
        case Stage::VerifyQuestions:   return "verify_questions";
        case Stage::VerifyIndependent: return "verify_independent";
        case Stage::VerifyReference:   return "verify_reference";
    }
    return "";
}

inline Stage stage_from_name(std::string_view name) {
    for (Stage s : kAllStages)
        if (stage_name(s) == name) return s;
    raise(Errc::FormatError, "unknown stage: '" + std::string(name) + "'");
}

/// Per-stage sampling temperature. Specialist answers and curation letters
/// use greedy decoding; verification sub-calls use temperature sampling.
inline double stage_temperature(Stage s) {
    switch (s) {
        case Stage::SpecialistAnswer:  return 0.0;
        case Stage::CurationLetter:    return 0.0;
        case Stage::VerifyQuestions:   return 0.3;
        case Stage::VerifyIndependent: return 0.4;
        case Stage::VerifyReference:   return 0.2;
    }
    return 0.0;
}

inline constexpr int kDefaultMaxNewTokens = 1024;
inline constexpr int kCurationMaxNewTokens = 8;

struct GenerationParams {
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    int max_new_tokens = kDefaultMaxNewTokens;
    Stage stage = Stage::SpecialistAnswer;

    /// The only sanctioned constructor path: temperature comes from the
    /// stage, curation letters are capped at 8 new tokens.
    static GenerationParams for_stage(Stage stage,
                                      std::optional<std::uint64_t> seed = std::nullopt,
                                      int max_new_tokens = kDefaultMaxNewTokens) {
        GenerationParams p;
        p.stage = stage;
        p.temperature = stage_temperature(stage);
        p.seed = seed;
        p.max_new_tokens = stage == Stage::CurationLetter ? kCurationMaxNewTokens
                                                          : max_new_tokens;
        if (p.max_new_tokens <= 0) raise(Errc::BadInput, "max_new_tokens must be positive");
        return p;
    }

    /// Rejects any temperature that disagrees with the stage mapping.
    static GenerationParams checked(Stage stage, double temperature,
                                    std::optional<std::uint64_t> seed = std::nullopt,
                                    int max_new_tokens = kDefaultMaxNewTokens) {
        if (temperature != stage_temperature(stage))
            raise(Errc::BadInput,
                  "temperature " + std::to_string(temperature) + " not allowed for stage " +
                      std::string(stage_name(stage)));
        return for_stage(stage, seed, max_new_tokens);
    }

    bool operator==(const GenerationParams&) const = default;
};

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    GenerationParams params;

    bool operator==(const ChatRequest&) const = default;
};

// ---------------------------------------------------------------------------
// Backend configuration

enum class BackendKind : int { HttpOpenAICompatible = 0, ScriptedMock = 1 };

inline std::string_view backend_kind_name(BackendKind k) {
    return k == BackendKind::HttpOpenAICompatible ? "http" : "mock";
}

inline BackendKind backend_kind_from_name(std::string_view name) {
    if (name == "http") return BackendKind::HttpOpenAICompatible;
    if (name == "mock") return BackendKind::ScriptedMock;
    raise(Errc::FormatError, "unknown backend kind: '" + std::string(name) + "'");
}

struct BackendConfig {
    BackendKind kind = BackendKind::ScriptedMock;
    std::optional<std::string> base_url;    // http kind
    std::string model_name = "local-model";
    std::string api_key_env = "MARC_API_KEY";
    int timeout_s = 120;
    int max_retries = 3;
    int retry_backoff_ms = 250;
    std::optional<std::string> script_path;  // mock kind
    std::optional<std::string> cache_dir;    // http kind, optional
    int max_inflight = 4;

    void validate() const {
        if (kind == BackendKind::HttpOpenAICompatible && !base_url)
            raise(Errc::BadInput, "http backend requires base_url");
        if (kind == BackendKind::ScriptedMock && !script_path)
            raise(Errc::BadInput, "mock backend requires script_path");
        if (timeout_s <= 0 || max_retries < 0 || max_inflight < 1)
            raise(Errc::BadInput, "invalid backend limits");
    }
};

inline void to_json(json& j, const BackendConfig& v) {
    j = json{{"kind", backend_kind_name(v.kind)},
             {"base_url", v.base_url ? json(*v.base_url) : json(nullptr)},
             {"model_name", v.model_name},
             {"api_key_env", v.api_key_env},
             {"timeout_s", v.timeout_s},
             {"max_retries", v.max_retries},
             {"retry_backoff_ms", v.retry_backoff_ms},
             {"script_path", v.script_path ? json(*v.script_path) : json(nullptr)},
             {"cache_dir", v.cache_dir ? json(*v.cache_dir) : json(nullptr)},
             {"max_inflight", v.max_inflight}};
}

inline void from_json(const json& j, BackendConfig& v) {
    v.kind = backend_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("base_url") && !j.at("base_url").is_null())
        v.base_url = j.at("base_url").get<std::string>();
    v.model_name = j.value("model_name", v.model_name);
    v.api_key_env = j.value("api_key_env", v.api_key_env);
    v.timeout_s = j.value("timeout_s", v.timeout_s);
    v.max_retries = j.value("max_retries", v.max_retries);
    v.retry_backoff_ms = j.value("retry_backoff_ms", v.retry_backoff_ms);
    if (j.contains("script_path") && !j.at("script_path").is_null())
        v.script_path = j.at("script_path").get<std::string>();
    if (j.contains("cache_dir") && !j.at("cache_dir").is_null())
        v.cache_dir = j.at("cache_dir").get<std::string>();
    v.max_inflight = j.value("max_inflight", v.max_inflight);
}

// ---------------------------------------------------------------------------
// Keys and seeds

/// Stable content hash over (system_prompt, user_prompt, stage, temperature,
/// seed). Addresses mock script entries and the on-disk response cache.
inline std::string request_key(const ChatRequest& req) {
    json canon = json::array({req.system_prompt, req.user_prompt,
                              std::string(stage_name(req.params.stage)),
                              req.params.temperature,
                              req.params.seed ? json(*req.params.seed) : json(nullptr)});
    return sha256_hex(canon.dump());
}

/// Content-addressed seed for one (question, specialist, stage) call. Pure
/// and platform-stable, so reordering or parallelism cannot change it.
inline std::uint64_t derive_seed(std::string_view question_id,
                                 const SpecialistIdentity& specialist, Stage stage) {
    std::string material;
    material.reserve(question_id.size() + 40);
    material.append(question_id);
    material.push_back('\x1f');
    material.append(specialty_name(specialist.specialty));
    material.push_back('\x1f');
    material.append(stage_name(stage));
    return sha256_prefix64(material);
}

// ---------------------------------------------------------------------------
// Completion results

struct Completion {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    std::int64_t latency_ms = 0;
};

/// Minimal chat-completion interface. Implementations must be safe for
/// concurrent invocation.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual Completion complete(const ChatRequest& request) = 0;
};

namespace detail {

inline int approx_token_count(std::string_view text) {
    int count = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

/// One scripted mock entry: either an exact request-key match or a set of
/// substring matchers tested against the rendered prompts.
struct ScriptEntry {
    std::optional<std::string> key;
    std::vector<std::string> matchers;
    std::optional<Stage> stage;
    std::string response;

    bool matches(const ChatRequest& req, const std::string& req_key) const {
        if (key) return *key == req_key;
        if (stage && *stage != req.params.stage) return false;
        for (const std::string& m : matchers) {
            if (req.system_prompt.find(m) == std::string::npos &&
                req.user_prompt.find(m) == std::string::npos)
                return false;
        }
        return !matchers.empty() || stage.has_value();
    }
};

inline std::vector<ScriptEntry> load_script(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoError, "cannot open mock script " + path.string());
    std::vector<ScriptEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            raise(Errc::FormatError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ScriptEntry entry;
        if (j.contains("key")) entry.key = j.at("key").get<std::string>();
        if (j.contains("match")) {
            const json& m = j.at("match");
            if (m.is_string())
                entry.matchers.push_back(m.get<std::string>());
            else
                for (const auto& s : m) entry.matchers.push_back(s.get<std::string>());
        }
        if (j.contains("stage"))
            entry.stage = stage_from_name(j.at("stage").get<std::string>());
        if (!j.contains("response"))
            raise(Errc::FormatError, path.string() + ":" + std::to_string(lineno) +
                                         ": script entry without response");
        entry.response = j.at("response").get<std::string>();
        if (!entry.key && entry.matchers.empty() && !entry.stage)
            raise(Errc::FormatError, path.string() + ":" + std::to_string(lineno) +
                                         ": script entry without key or matcher");
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Backend

/// Uniform chat-completion backend: a live OpenAI-compatible HTTP client or
/// a deterministic scripted mock, selected by configuration.
class Backend : public ChatClient {
public:
    explicit Backend(BackendConfig config) : config_(std::move(config)) {
        config_.validate();
        if (config_.kind == BackendKind::ScriptedMock)
            script_ = detail::load_script(*config_.script_path);
        if (config_.cache_dir) fs::create_directories(*config_.cache_dir);
    }

    const BackendConfig& config() const { return config_; }

    /// Total completed calls (cache hits included). For budget accounting.
    std::uint64_t calls() const { return calls_.load(); }

    Completion complete(const ChatRequest& request) override {
        if (request.system_prompt.empty() || request.user_prompt.empty())
            raise(Errc::BadInput, "chat request with empty prompt");
        Completion result = config_.kind == BackendKind::ScriptedMock
                                ? complete_mock(request)
                                : complete_http(request);
        calls_.fetch_add(1);
        return result;
    }

private:
    Completion complete_mock(const ChatRequest& request) {
        const std::string key = request_key(request);
        for (const auto& entry : script_) {
            if (entry.matches(request, key)) {
                Completion c;
                c.text = entry.response;
                c.prompt_tokens = detail::approx_token_count(request.system_prompt) +
                                  detail::approx_token_count(request.user_prompt);
                c.completion_tokens = detail::approx_token_count(c.text);
                c.latency_ms = 0;
                return c;
            }
        }
        raise(Errc::ScriptMiss, "no script entry for request key " + key + " (stage " +
                                    std::string(stage_name(request.params.stage)) + ")");
    }

    // Caps concurrent live requests at config_.max_inflight.
    class InflightGuard {
    public:
        InflightGuard(std::mutex& mu, std::condition_variable& cv, int& active, int limit)
            : mu_(mu), cv_(cv), active_(active) {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return active_ < limit; });
            ++active_;
        }
        ~InflightGuard() {
            {
                std::lock_guard lock(mu_);
                --active_;
            }
            cv_.notify_one();
        }

    private:
        std::mutex& mu_;
        std::condition_variable& cv_;
        int& active_;
    };

    Completion complete_http(const ChatRequest& request) {
        const std::string key = request_key(request);
        if (config_.cache_dir) {
            if (auto cached = cache_read(key)) return *cached;
        }
        InflightGuard inflight(inflight_mutex_, inflight_cv_, inflight_active_,
                               config_.max_inflight);

        json body = {
            {"model", config_.model_name},
            {"messages",
             json::array({json{{"role", "system"}, {"content", request.system_prompt}},
                          json{{"role", "user"}, {"content", request.user_prompt}}})},
            {"temperature", request.params.temperature},
            {"max_tokens", request.params.max_new_tokens},
        };
        if (request.params.seed) body["seed"] = *request.params.seed;
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (const char* api_key = std::getenv(config_.api_key_env.c_str());
            api_key && *api_key)
            headers.emplace("Authorization", std::string("Bearer ") + api_key);

        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto backoff = std::chrono::milliseconds(
                    static_cast<std::int64_t>(config_.retry_backoff_ms) << (attempt - 1));
                std::this_thread::sleep_for(backoff);
            }
            auto start = std::chrono::steady_clock::now();
            httplib::Client client(*config_.base_url);
            client.set_connection_timeout(config_.timeout_s, 0);
            client.set_read_timeout(config_.timeout_s, 0);
            client.set_write_timeout(config_.timeout_s, 0);
            auto res = client.Post("/chat/completions", headers, payload, "application/json");
            auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - start)
                               .count();
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;  // transport failure: retry
            }
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;  // server error: retry
            }
            if (res->status < 200 || res->status >= 300)
                raise(Errc::BadResponse, "HTTP " + std::to_string(res->status) + " from " +
                                             *config_.base_url + ": " + res->body);
            Completion c = parse_chat_body(res->body);
            c.latency_ms = latency;
            if (config_.cache_dir) cache_write(key, c);
            return c;
        }
        raise(Errc::EndpointUnreachable,
              *config_.base_url + " unreachable after " +
                  std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
    }

    static Completion parse_chat_body(const std::string& body) {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception& e) {
            raise(Errc::BadResponse, std::string("malformed completion body: ") + e.what());
        }
        Completion c;
        try {
            c.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            raise(Errc::BadResponse, "completion body missing choices[0].message.content");
        }
        if (j.contains("usage")) {
            const json& u = j["usage"];
            c.prompt_tokens = u.value("prompt_tokens", 0);
            c.completion_tokens = u.value("completion_tokens", 0);
        }
        return c;
    }

    std::optional<Completion> cache_read(const std::string& key) {
        fs::path path = fs::path(*config_.cache_dir) / (key + ".json");
        std::lock_guard lock(cache_mutex_);
        if (!fs::exists(path)) return std::nullopt;
        json j;
        try {
            j = json::parse(read_file(path));
        } catch (const json::exception&) {
            return std::nullopt;  // unreadable cache entry: refetch
        }
        Completion c;
        c.text = j.value("text", "");
        c.prompt_tokens = j.value("prompt_tokens", 0);
        c.completion_tokens = j.value("completion_tokens", 0);
        c.latency_ms = 0;
        return c;
    }

    void cache_write(const std::string& key, const Completion& c) {
        json j = {{"text", c.text},
                  {"prompt_tokens", c.prompt_tokens},
                  {"completion_tokens", c.completion_tokens}};
        std::lock_guard lock(cache_mutex_);
        write_file_atomic(fs::path(*config_.cache_dir) / (key + ".json"), j.dump());
    }

    BackendConfig config_;
    std::vector<detail::ScriptEntry> script_;
    std::atomic<std::uint64_t> calls_{0};
    std::mutex cache_mutex_;
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int inflight_active_ = 0;
};

/// One-shot form of Backend::complete for callers without a live instance.
inline Completion complete(const ChatRequest& request, const BackendConfig& config) {
    Backend backend(config);
    return backend.complete(request);
}

}  // namespace marc

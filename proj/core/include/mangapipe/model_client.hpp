#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mangapipe/geometry.hpp"
#include "mangapipe/page_graph.hpp"
#include "mangapipe/token_codec.hpp"

namespace mangapipe {

inline constexpr std::string_view kProtocolVersion = "v1";

enum class InferenceTask { Detect, Ocr, Ground };

std::string_view to_string(InferenceTask task) noexcept;
std::optional<InferenceTask> inference_task_from_string(std::string_view name) noexcept;
/// "/v1/detect" etc.
std::string endpoint_path(InferenceTask task);

struct InferenceRequest {
    InferenceTask task = InferenceTask::Detect;
    std::string image;  // encoded image file bytes (not base64)
    ImageDims dims;
    std::optional<std::string> caption;  // required iff task == Ground

    /// Throws InputError when the caption rule or dims are violated.
    void validate() const;
};

struct Capabilities {
    bool association_heads = true;

    friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

struct InferenceResponse {
    TokenStream tokens;
    std::optional<ScoreTable> scores;  // Detect only
    Capabilities capabilities;

    friend bool operator==(const InferenceResponse&, const InferenceResponse&) = default;
};

struct ChatRequest {
    std::optional<std::string> system;
    std::string user;
    std::optional<std::string> image;  // encoded image bytes (not base64)

    void validate() const;
};

struct ChatResponse {
    std::string text;
};

// Wire schema, shared by clients and the mock server. The *_from_json
// functions throw SchemaError; unknown fields are rejected.
nlohmann::json request_to_json(const InferenceRequest& req);
InferenceRequest request_from_json(InferenceTask task, const nlohmann::json& body);
nlohmann::json response_to_json(const InferenceResponse& resp);
InferenceResponse response_from_json(const nlohmann::json& body);
nlohmann::json chat_request_to_json(const ChatRequest& req);
ChatRequest chat_request_from_json(const nlohmann::json& body);
nlohmann::json chat_response_to_json(const ChatResponse& resp);
ChatResponse chat_response_from_json(const nlohmann::json& body);
nlohmann::json error_body(std::string_view code, std::string_view message, std::string_view image_sha256 = {});

/// Checks that tokens decode for the task and that score shapes agree with
/// the decoded node counts. Throws ProtocolError carrying `raw_payload`.
void validate_response(InferenceTask task, const InferenceResponse& resp, const std::string& raw_payload);

/// Parses and validates a raw response body.
InferenceResponse decode_response(InferenceTask task, const std::string& raw_payload);
ChatResponse decode_chat_response(const std::string& raw_payload);

/// Content key of a chat request: SHA-256 over the canonical JSON of
/// {system, user, image_sha256}.
std::string chat_request_key(const ChatRequest& req);

class InferenceService {
public:
    virtual ~InferenceService() = default;
    virtual InferenceResponse infer(const InferenceRequest& req) = 0;
    virtual Capabilities health() = 0;
};

class ChatService {
public:
    virtual ~ChatService() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
};

struct ClientOptions {
    std::string base_url;  // http[s]://host[:port][/prefix]
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff_initial{100};
    double backoff_factor = 2.0;
    std::optional<std::string> bearer_key;

    void validate() const;
};

/// Posts one JSON body with the retry contract: transport failures
/// (connection errors, timeouts, 502/503/504) are retried with exponential
/// backoff; anything else is returned or thrown immediately. Safe for
/// concurrent use; each call opens its own connection.
class HttpTransport {
public:
    explicit HttpTransport(ClientOptions options);

    /// Returns the 200 body. Non-2xx non-retryable statuses raise ProtocolError.
    std::string post_json(const std::string& path, const std::string& body) const;
    std::string get(const std::string& path) const;

    const ClientOptions& options() const noexcept { return options_; }

private:
    std::string send(const std::string& method, const std::string& path, const std::string* body) const;

    ClientOptions options_;
    std::string scheme_host_port_;
    std::string prefix_;
};

class HttpInferenceClient final : public InferenceService {
public:
    explicit HttpInferenceClient(ClientOptions options) : transport_(std::move(options)) {}
    InferenceResponse infer(const InferenceRequest& req) override;
    Capabilities health() override;

private:
    HttpTransport transport_;
};

class HttpChatClient final : public ChatService {
public:
    explicit HttpChatClient(ClientOptions options) : transport_(std::move(options)) {}
    ChatResponse chat(const ChatRequest& req) override;

private:
    HttpTransport transport_;
};

}  // namespace mangapipe

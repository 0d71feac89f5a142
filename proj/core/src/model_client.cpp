#include "mangapipe/model_client.hpp"

#include <algorithm>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"

namespace mangapipe {

using nlohmann::json;

namespace {

void reject_unknown(const json& body, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : body.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) throw SchemaError("/" + key, "unknown field");
    }
}

void require_version(const json& body) {
    if (!body.is_object()) throw SchemaError("", "expected object");
    auto it = body.find("version");
    if (it == body.end()) throw SchemaError("/version", "missing field");
    if (!it->is_string() || it->get<std::string>() != kProtocolVersion) {
        throw SchemaError("/version", "unsupported protocol version " + it->dump());
    }
}

std::string require_string(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end()) throw SchemaError(std::string("/") + key, "missing field");
    if (!it->is_string()) throw SchemaError(std::string("/") + key, "expected string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaError(std::string("/") + key, "expected string");
    return it->get<std::string>();
}

int require_dim(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end()) throw SchemaError(std::string("/") + key, "missing field");
    if (!it->is_number_integer() || it->get<long long>() < 1 || it->get<long long>() > INT32_MAX) {
        throw SchemaError(std::string("/") + key, "expected positive integer");
    }
    return it->get<int>();
}

std::string decode_b64_field(const std::string& text, const char* key) {
    try {
        return base64_decode(text);
    } catch (const InputError&) {
        throw SchemaError(std::string("/") + key, "invalid base64");
    }
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name, const std::string& raw) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ProtocolError(std::string(name) + ": expected shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()),
                            raw);
    }
}

}  // namespace

std::string_view to_string(InferenceTask task) noexcept {
    switch (task) {
        case InferenceTask::Detect: return "detect";
        case InferenceTask::Ocr: return "ocr";
        case InferenceTask::Ground: return "ground";
    }
    return "detect";
}

std::optional<InferenceTask> inference_task_from_string(std::string_view name) noexcept {
    if (name == "detect") return InferenceTask::Detect;
    if (name == "ocr") return InferenceTask::Ocr;
    if (name == "ground") return InferenceTask::Ground;
    return std::nullopt;
}

std::string endpoint_path(InferenceTask task) { return "/v1/" + std::string(to_string(task)); }

void InferenceRequest::validate() const {
    if (dims.width < 1 || dims.height < 1) throw InputError("image dims must be positive");
    if (image.empty()) throw InputError("image bytes are empty");
    if (task == InferenceTask::Ground && !caption) throw InputError("ground request requires a caption");
    if (task == InferenceTask::Ground && caption->empty()) throw InputError("ground request caption is empty");
    if (task != InferenceTask::Ground && caption) {
        throw InputError(std::string(to_string(task)) + " request must not carry a caption");
    }
}

void ChatRequest::validate() const {
    if (user.empty()) throw InputError("chat request user message is empty");
}

json request_to_json(const InferenceRequest& req) {
    json j = {{"version", kProtocolVersion},
              {"image", base64_encode(req.image)},
              {"width", req.dims.width},
              {"height", req.dims.height}};
    if (req.caption) j["caption"] = *req.caption;
    return j;
}

InferenceRequest request_from_json(InferenceTask task, const json& body) {
    require_version(body);
    reject_unknown(body, {"version", "image", "width", "height", "caption"});
    InferenceRequest req;
    req.task = task;
    req.image = decode_b64_field(require_string(body, "image"), "image");
    if (req.image.empty()) throw SchemaError("/image", "empty image");
    req.dims = {require_dim(body, "width"), require_dim(body, "height")};
    req.caption = optional_string(body, "caption");
    if (task == InferenceTask::Ground && (!req.caption || req.caption->empty())) {
        throw SchemaError("/caption", "required for ground");
    }
    if (task != InferenceTask::Ground && req.caption) throw SchemaError("/caption", "only allowed for ground");
    return req;
}

json response_to_json(const InferenceResponse& resp) {
    json j = {{"version", kProtocolVersion},
              {"tokens", resp.tokens},
              {"capabilities", {{"association_heads", resp.capabilities.association_heads}}}};
    if (resp.scores) j["scores"] = score_table_to_json(*resp.scores);
    return j;
}

InferenceResponse response_from_json(const json& body) {
    require_version(body);
    reject_unknown(body, {"version", "tokens", "scores", "capabilities"});
    InferenceResponse resp;
    auto tokens = body.find("tokens");
    if (tokens == body.end() || !tokens->is_array()) throw SchemaError("/tokens", "expected array of strings");
    for (std::size_t i = 0; i < tokens->size(); ++i) {
        if (!(*tokens)[i].is_string()) throw SchemaError("/tokens/" + std::to_string(i), "expected string");
        resp.tokens.push_back((*tokens)[i].get<std::string>());
    }
    if (auto s = body.find("scores"); s != body.end() && !s->is_null()) resp.scores = score_table_from_json(*s, "/scores");
    if (auto c = body.find("capabilities"); c != body.end()) {
        if (!c->is_object()) throw SchemaError("/capabilities", "expected object");
        if (auto a = c->find("association_heads"); a != c->end()) {
            if (!a->is_boolean()) throw SchemaError("/capabilities/association_heads", "expected boolean");
            resp.capabilities.association_heads = a->get<bool>();
        }
    }
    return resp;
}

json chat_request_to_json(const ChatRequest& req) {
    json j = {{"version", kProtocolVersion}, {"user", req.user}};
    if (req.system) j["system"] = *req.system;
    if (req.image) j["image"] = base64_encode(*req.image);
    return j;
}

ChatRequest chat_request_from_json(const json& body) {
    require_version(body);
    reject_unknown(body, {"version", "system", "user", "image"});
    ChatRequest req;
    req.user = require_string(body, "user");
    if (req.user.empty()) throw SchemaError("/user", "must not be empty");
    req.system = optional_string(body, "system");
    if (auto img = optional_string(body, "image")) req.image = decode_b64_field(*img, "image");
    return req;
}

json chat_response_to_json(const ChatResponse& resp) { return {{"version", kProtocolVersion}, {"text", resp.text}}; }

ChatResponse chat_response_from_json(const json& body) {
    require_version(body);
    reject_unknown(body, {"version", "text"});
    return {require_string(body, "text")};
}

json error_body(std::string_view code, std::string_view message, std::string_view image_sha256) {
    json err = {{"code", code}, {"message", message}};
    if (!image_sha256.empty()) err["image_sha256"] = image_sha256;
    return {{"error", err}};
}

void validate_response(InferenceTask task, const InferenceResponse& resp, const std::string& raw) {
    try {
        switch (task) {
            case InferenceTask::Detect: {
                const auto records = parse_detection(resp.tokens);
                if (!resp.scores) throw ProtocolError("detect response lacks association scores", raw);
                std::size_t n_char = 0, n_text = 0, n_tail = 0;
                for (const auto& r : records) {
                    n_char += r.kind == NodeKind::Character;
                    n_text += r.kind == NodeKind::Text;
                    n_tail += r.kind == NodeKind::Tail;
                }
                check_shape(resp.scores->text_char, n_text, n_char, "text_char", raw);
                check_shape(resp.scores->char_char, n_char, n_char, "char_char", raw);
                check_shape(resp.scores->text_tail, n_text, n_tail, "text_tail", raw);
                break;
            }
            case InferenceTask::Ocr:
                parse_ocr(resp.tokens);
                if (resp.scores) throw ProtocolError("ocr response must not carry scores", raw);
                break;
            case InferenceTask::Ground:
                parse_grounded_caption(resp.tokens);
                if (resp.scores) throw ProtocolError("ground response must not carry scores", raw);
                break;
        }
    } catch (const ParseError& e) {
        throw ProtocolError(std::string("undecodable ") + std::string(to_string(task)) + " tokens: " + e.what(), raw);
    }
}

InferenceResponse decode_response(InferenceTask task, const std::string& raw) {
    const json body = json::parse(raw, nullptr, false);
    if (body.is_discarded()) throw ProtocolError("response is not JSON", raw);
    InferenceResponse resp;
    try {
        resp = response_from_json(body);
    } catch (const SchemaError& e) {
        throw ProtocolError(std::string("response schema: ") + e.what(), raw);
    }
    validate_response(task, resp, raw);
    return resp;
}

ChatResponse decode_chat_response(const std::string& raw) {
    const json body = json::parse(raw, nullptr, false);
    if (body.is_discarded()) throw ProtocolError("chat response is not JSON", raw);
    ChatResponse resp;
    try {
        resp = chat_response_from_json(body);
    } catch (const SchemaError& e) {
        throw ProtocolError(std::string("chat response schema: ") + e.what(), raw);
    }
    if (resp.text.empty()) throw ProtocolError("chat response text is empty", raw);
    return resp;
}

std::string chat_request_key(const ChatRequest& req) {
    const json key = {{"system", req.system ? json(*req.system) : json(nullptr)},
                      {"user", req.user},
                      {"image_sha256", req.image ? json(sha256_hex(*req.image)) : json(nullptr)}};
    return sha256_hex(key.dump());
}

// ---------------------------------------------------------------------------

void ClientOptions::validate() const {
    static const std::regex url(R"(^https?://[^/\s]+(/.*)?$)");
    if (!std::regex_match(base_url, url)) throw InputError("endpoint URL must look like http[s]://host[:port][/path], got '" + base_url + "'");
    if (timeout.count() <= 0) throw InputError("timeout must be positive");
    if (max_attempts < 1) throw InputError("max_attempts must be at least 1");
    if (backoff_initial.count() < 0 || !(backoff_factor >= 1.0)) throw InputError("invalid backoff settings");
}

HttpTransport::HttpTransport(ClientOptions options) : options_(std::move(options)) {
    options_.validate();
    const auto scheme_end = options_.base_url.find("://") + 3;
    const auto path_start = options_.base_url.find('/', scheme_end);
    scheme_host_port_ = options_.base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = options_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
}

std::string HttpTransport::post_json(const std::string& path, const std::string& body) const {
    return send("POST", path, &body);
}

std::string HttpTransport::get(const std::string& path) const { return send("GET", path, nullptr); }

std::string HttpTransport::send(const std::string& method, const std::string& path, const std::string* body) const {
    const std::string full_path = prefix_ + path;
    auto delay = options_.backoff_initial;
    std::string last_error;
    bool last_was_timeout = false;

    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(delay);
            delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * options_.backoff_factor));
        }
        httplib::Client cli(scheme_host_port_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        if (options_.bearer_key) headers.emplace("Authorization", "Bearer " + *options_.bearer_key);

        const auto start = std::chrono::steady_clock::now();
        auto res = method == "POST" ? cli.Post(full_path, headers, *body, "application/json") : cli.Get(full_path, headers);
        const auto elapsed = std::chrono::steady_clock::now() - start;

        if (!res) {
            const auto err = res.error();
            last_was_timeout = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= options_.timeout * 9 / 10);
            last_error = method + " " + scheme_host_port_ + full_path + ": " +
                         (last_was_timeout ? std::string("timed out") : httplib::to_string(err));
        } else if (res->status == 502 || res->status == 503 || res->status == 504) {
            last_was_timeout = false;
            last_error = method + " " + scheme_host_port_ + full_path + ": HTTP " + std::to_string(res->status);
        } else if (res->status >= 200 && res->status < 300) {
            return res->body;
        } else {
            throw ProtocolError(method + " " + full_path + ": HTTP " + std::to_string(res->status), res->body, res->status);
        }
        spdlog::debug("attempt {}/{} failed: {}", attempt, options_.max_attempts, last_error);
    }
    const std::string msg = last_error + " (after " + std::to_string(options_.max_attempts) + " attempts)";
    if (last_was_timeout) throw TimeoutError(msg);
    throw TransportError(msg);
}

InferenceResponse HttpInferenceClient::infer(const InferenceRequest& req) {
    req.validate();
    const std::string raw = transport_.post_json(endpoint_path(req.task), request_to_json(req).dump());
    return decode_response(req.task, raw);
}

Capabilities HttpInferenceClient::health() {
    const std::string raw = transport_.get("/v1/health");
    const json body = json::parse(raw, nullptr, false);
    if (body.is_discarded() || !body.is_object() || body.value("status", "") != "ready") {
        throw ProtocolError("health endpoint not ready", raw);
    }
    Capabilities caps;
    if (auto c = body.find("capabilities"); c != body.end() && c->is_object()) {
        caps.association_heads = c->value("association_heads", true);
    }
    return caps;
}

ChatResponse HttpChatClient::chat(const ChatRequest& req) {
    req.validate();
    return decode_chat_response(transport_.post_json("/v1/chat", chat_request_to_json(req).dump()));
}

}  // namespace mangapipe

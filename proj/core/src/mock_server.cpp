#include "mangapipe/mock_server.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"

namespace mangapipe {

using nlohmann::json;

namespace {

std::string field(const json& entry, const char* key, const std::string& at) {
    auto it = entry.find(key);
    if (it == entry.end() || !it->is_string() || it->get<std::string>().empty()) {
        throw SchemaError(at + "/" + key, "expected nonempty string");
    }
    return it->get<std::string>();
}

}  // namespace

FixtureStore FixtureStore::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError(dir.string(), "fixture directory does not exist");
    const json manifest = read_json_file(dir / "fixtures.json");
    if (!manifest.is_object() || manifest.value("version", "") != kProtocolVersion) {
        throw SchemaError("/version", "fixture manifest must declare version v1");
    }
    FixtureStore store;
    if (auto c = manifest.find("capabilities"); c != manifest.end()) {
        if (!c->is_object() || !c->value("association_heads", json(true)).is_boolean()) {
            throw SchemaError("/capabilities", "expected {association_heads: bool}");
        }
        store.capabilities_.association_heads = c->value("association_heads", true);
    }
    auto entries = manifest.find("entries");
    if (entries == manifest.end() || !entries->is_array()) throw SchemaError("/entries", "expected array");
    for (std::size_t i = 0; i < entries->size(); ++i) {
        const std::string at = "/entries/" + std::to_string(i);
        const json& e = (*entries)[i];
        if (!e.is_object()) throw SchemaError(at, "expected object");
        Key key;
        key.task = field(e, "task", at);
        if (key.task == "chat") {
            key.primary = field(e, "request_sha256", at);
        } else if (inference_task_from_string(key.task)) {
            key.primary = field(e, "image_sha256", at);
            if (key.task == "ground") key.secondary = field(e, "caption_sha256", at);
        } else {
            throw SchemaError(at + "/task", "unknown task '" + key.task + "'");
        }
        const std::string file = field(e, "response", at);
        std::string body = read_file(dir / file);
        if (!store.bodies_.emplace(key, std::move(body)).second) throw SchemaError(at, "duplicate fixture key");
    }
    return store;
}

FixtureStore::Key FixtureStore::key_for(const InferenceRequest& req) {
    return {std::string(to_string(req.task)), sha256_hex(req.image), req.caption ? sha256_hex(*req.caption) : ""};
}

FixtureStore::Key FixtureStore::key_for(const ChatRequest& req) { return {"chat", chat_request_key(req), ""}; }

const std::string* FixtureStore::find(const Key& key) const {
    auto it = bodies_.find(key);
    return it == bodies_.end() ? nullptr : &it->second;
}

InferenceResponse FixtureStore::infer(const InferenceRequest& req) {
    req.validate();
    const Key key = key_for(req);
    const std::string* body = find(key);
    if (!body) {
        throw ProtocolError("no " + key.task + " fixture for image " + key.primary,
                            error_body("not_found", "no fixture", key.primary).dump(), 404);
    }
    return decode_response(req.task, *body);
}

ChatResponse FixtureStore::chat(const ChatRequest& req) {
    req.validate();
    const Key key = key_for(req);
    const std::string* body = find(key);
    if (!body) {
        throw ProtocolError("no chat fixture for request " + key.primary,
                            error_body("not_found", "no fixture for request " + key.primary).dump(), 404);
    }
    return decode_chat_response(*body);
}

// ---------------------------------------------------------------------------

struct MockServer::Impl {
    FixtureStore store;
    httplib::Server server;
    std::thread thread;
};

MockServer::MockServer(FixtureStore store, MockServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
    impl_->store = std::move(store);
    if (options_.port < 0 || options_.port > 65535) throw InputError("port must lie in [0, 65535]");
    if (options_.fail_first_n < 0) throw InputError("fail_first_n must be nonnegative");
}

MockServer::~MockServer() { stop(); }

std::string MockServer::url() const { return "http://" + options_.host + ":" + std::to_string(port_); }

void MockServer::start() {
    auto& srv = impl_->server;
    auto reply_error = [](httplib::Response& res, int status, std::string_view code, std::string_view msg,
                          std::string_view sha = {}) {
        res.status = status;
        res.set_content(error_body(code, msg, sha).dump(), "application/json");
    };

    // Shared gate: counting, fault injection, latency. Returns false when the
    // request was already answered.
    auto gate = [this, reply_error](httplib::Response& res) {
        const std::size_t n = ++requests_;
        if (options_.delay.count() > 0) std::this_thread::sleep_for(options_.delay);
        if (static_cast<long long>(n) <= options_.fail_first_n) {
            reply_error(res, 503, "unavailable", "injected failure");
            return false;
        }
        return true;
    };
    auto serve_body = [this](httplib::Response& res, const std::string& body) {
        res.status = 200;
        res.set_content(options_.corrupt ? body.substr(0, body.size() / 2) : body, "application/json");
    };

    for (InferenceTask task : {InferenceTask::Detect, InferenceTask::Ocr, InferenceTask::Ground}) {
        srv.Post(endpoint_path(task), [=, this](const httplib::Request& req, httplib::Response& res) {
            if (!gate(res)) return;
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) return reply_error(res, 400, "bad_request", "body is not JSON");
            InferenceRequest parsed;
            try {
                parsed = request_from_json(task, body);
            } catch (const SchemaError& e) {
                return reply_error(res, 400, "schema", e.what());
            }
            const auto key = FixtureStore::key_for(parsed);
            const std::string* canned = impl_->store.find(key);
            if (!canned) return reply_error(res, 404, "not_found", "no fixture for image", key.primary);
            serve_body(res, *canned);
        });
    }
    srv.Post("/v1/chat", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (!gate(res)) return;
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded()) return reply_error(res, 400, "bad_request", "body is not JSON");
        ChatRequest parsed;
        try {
            parsed = chat_request_from_json(body);
        } catch (const SchemaError& e) {
            return reply_error(res, 400, "schema", e.what());
        }
        const auto key = FixtureStore::key_for(parsed);
        const std::string* canned = impl_->store.find(key);
        if (!canned) return reply_error(res, 404, "not_found", "no fixture for request " + key.primary);
        serve_body(res, *canned);
    });
    srv.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        const json body = {
            {"status", "ready"},
            {"version", kProtocolVersion},
            {"capabilities",
             {{"association_heads", impl_->store.capabilities().association_heads},
              {"tasks", {"detect", "ocr", "ground", "chat"}}}}};
        res.set_content(body.dump(), "application/json");
    });
    srv.set_error_handler([reply_error](const httplib::Request& req, httplib::Response& res) {
        if (res.body.empty()) reply_error(res, res.status, res.status == 404 ? "not_found" : "error", req.method + " " + req.path);
    });

    if (options_.port == 0) {
        port_ = srv.bind_to_any_port(options_.host);
    } else {
        port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) throw IoError(options_.host + ":" + std::to_string(options_.port), "cannot bind");
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    spdlog::debug("mock server listening on {}", url());
}

void MockServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void MockServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace mangapipe

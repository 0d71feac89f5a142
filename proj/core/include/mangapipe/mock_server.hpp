#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>

#include "mangapipe/model_client.hpp"

namespace mangapipe {

/// Canned responses keyed by content hash. The directory holds
/// `fixtures.json`:
///   {"version": "v1", "capabilities": {...}?, "entries": [
///     {"task": "detect"|"ocr", "image_sha256": ..., "response": file},
///     {"task": "ground", "image_sha256": ..., "caption_sha256": ..., "response": file},
///     {"task": "chat", "request_sha256": ..., "response": file}]}
/// Response files hold the exact wire body and are served verbatim.
class FixtureStore final : public InferenceService, public ChatService {
public:
    /// Throws SchemaError / IoError on a malformed manifest or missing file.
    static FixtureStore load(const std::filesystem::path& dir);

    struct Key {
        std::string task;
        std::string primary;    // image hash, or chat request key
        std::string secondary;  // caption hash for ground
        auto operator<=>(const Key&) const = default;
    };

    static Key key_for(const InferenceRequest& req);
    static Key key_for(const ChatRequest& req);

    const std::string* find(const Key& key) const;
    std::size_t size() const noexcept { return bodies_.size(); }
    const Capabilities& capabilities() const noexcept { return capabilities_; }

    // In-process replay; a miss raises ProtocolError with status 404.
    InferenceResponse infer(const InferenceRequest& req) override;
    Capabilities health() override { return capabilities_; }
    ChatResponse chat(const ChatRequest& req) override;

private:
    std::map<Key, std::string> bodies_;
    Capabilities capabilities_;
};

struct MockServerOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::chrono::milliseconds delay{0};
    int fail_first_n = 0;  // answer the first n requests with 503
    bool corrupt = false;  // truncate every canned body
};

/// Serves the v1 wire protocol from a FixtureStore on a background thread.
class MockServer {
public:
    MockServer(FixtureStore store, MockServerOptions options = {});
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    /// Binds and starts serving; returns once the socket accepts connections.
    void start();
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

    int port() const noexcept { return port_; }
    std::string url() const;
    std::size_t request_count() const noexcept { return requests_.load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    MockServerOptions options_;
    int port_ = 0;
    std::atomic<std::size_t> requests_{0};
};

}  // namespace mangapipe

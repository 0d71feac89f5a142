#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <iterator>
#include <sstream>

#include <pthread.h>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/mock_server.hpp"

namespace mangapipe::cli {

using nlohmann::json;

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

json box_json(const QuantizedBox& q) { return json::array({q.bx_min, q.by_min, q.bx_max, q.by_max}); }

json pixel_json(const QuantizedBox& q, const std::optional<ImageDims>& dims) {
    if (!dims) return nullptr;
    const BBox b = dequantize(q, *dims);
    return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

}  // namespace

void apply_environment(RunOptions& opts) {
    if (opts.config.infer_url.empty()) opts.config.infer_url = env("MANGAPIPE_INFER_URL").value_or("");
    if (opts.config.chat_url.empty()) opts.config.chat_url = env("MANGAPIPE_CHAT_URL").value_or("");
    if (!opts.chat_key) opts.chat_key = env("MANGAPIPE_CHAT_KEY");
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.config.infer_url.empty()) {
        err << "error: no inference endpoint; pass --infer-url or set MANGAPIPE_INFER_URL\n";
        return kExitUsage;
    }
    if (opts.config.chat_url.empty()) {
        err << "error: no chat endpoint; pass --chat-url or set MANGAPIPE_CHAT_URL\n";
        return kExitUsage;
    }
    RunSummary summary;
    try {
        opts.config.validate();
        ClientOptions infer;
        infer.base_url = opts.config.infer_url;
        infer.timeout = opts.timeout;
        infer.max_attempts = opts.attempts;
        ClientOptions chat = infer;
        chat.base_url = opts.config.chat_url;
        chat.bearer_key = opts.chat_key;
        HttpInferenceClient infer_client(infer);
        HttpChatClient chat_client(chat);
        summary = run_pipeline(opts.pages_dir, opts.out_dir, opts.config, infer_client, chat_client);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    if (opts.json) {
        json pages = json::array();
        for (const auto& p : summary.pages) {
            pages.push_back({{"image", p.image},
                             {"stage", to_string(p.reached)},
                             {"resumed", p.resumed},
                             {"error", p.error ? json(*p.error) : json(nullptr)}});
        }
        out << json{{"pages", pages}, {"failed", summary.failed()}}.dump(2) << "\n";
    } else {
        for (const auto& p : summary.pages) {
            out << p.image << "  " << to_string(p.reached) << (p.resumed ? " (resumed)" : "");
            if (p.error) out << "  FAILED: " << *p.error;
            out << "\n";
        }
        out << summary.pages.size() << " page(s), " << summary.failed() << " failed\n";
    }
    return summary.exit_code();
}

int cmd_decode(const DecodeOptions& opts, std::istream& in, std::ostream& out, std::ostream& err) {
    std::string text;
    try {
        if (opts.input == "-") {
            text.assign(std::istreambuf_iterator<char>(in), {});
        } else {
            text = read_file(opts.input);
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        TokenStream tokens;
        const auto first = text.find_first_not_of(" \t\r\n");
        if (first != std::string::npos && text[first] == '[') {
            const json arr = json::parse(text, nullptr, false);
            if (arr.is_discarded() || !arr.is_array()) {
                err << "error: input looks like JSON but is not an array of tokens\n";
                return kExitUsage;
            }
            for (const auto& t : arr) {
                if (!t.is_string()) {
                    err << "error: token array holds a non-string\n";
                    return kExitUsage;
                }
                tokens.push_back(t.get<std::string>());
            }
        } else {
            while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
            tokens = from_notation(text);
        }

        json result = json::array();
        switch (opts.task) {
            case InferenceTask::Detect:
                for (const auto& r : parse_detection(tokens)) {
                    result.push_back({{"kind", to_string(r.kind)}, {"bins", box_json(r.box)}, {"pixels", pixel_json(r.box, opts.dims)}});
                }
                break;
            case InferenceTask::Ocr:
                for (const auto& r : parse_ocr(tokens)) {
                    result.push_back({{"text", r.text}, {"bins", box_json(r.box)}, {"pixels", pixel_json(r.box, opts.dims)}});
                }
                break;
            case InferenceTask::Ground: {
                const auto gc = parse_grounded_caption(tokens);
                for (const auto& seg : gc.segments) {
                    if (const auto* p = std::get_if<PlainSegment>(&seg)) {
                        result.push_back({{"text", p->text}});
                        continue;
                    }
                    const auto& ph = std::get<PhraseSegment>(seg);
                    json boxes = json::array();
                    for (const auto& b : ph.boxes) boxes.push_back(box_json(b));
                    result.push_back({{"phrase", ph.phrase}, {"bins", boxes}});
                }
                break;
            }
        }
        out << result.dump(2) << "\n";
        return kExitOk;
    } catch (const ParseError& e) {
        err << "decode failed at token " << e.token_index() << ": " << e.reason() << "\n";
        return kExitFailures;
    }
}

int cmd_mock_serve(const MockServeOptions& opts, std::ostream& out, std::ostream& err) {
    std::optional<FixtureStore> store;
    try {
        store = FixtureStore::load(opts.fixtures);
    } catch (const Error& e) {
        err << "error: bad fixture directory: " << e.what() << "\n";
        return kExitUsage;
    }

    // Block the stop signals before any server thread exists so only
    // sigwait below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    MockServerOptions mo;
    mo.host = opts.host;
    mo.port = opts.port;
    mo.delay = std::chrono::milliseconds(opts.delay_ms);
    mo.fail_first_n = opts.fail_first;
    try {
        MockServer server(std::move(*store), mo);
        server.start();
        out << "serving " << opts.fixtures.string() << " on " << server.url() << std::endl;
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
        out << "stopped after " << server.request_count() << " request(s)" << std::endl;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace mangapipe::cli

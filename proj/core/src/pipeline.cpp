#include "mangapipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"
#include "mangapipe/image.hpp"
#include "mangapipe/reconcile.hpp"
#include "mangapipe/transcript.hpp"

namespace mangapipe {

using nlohmann::json;

namespace {

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
}

// Thresholds above 1 switch association off entirely: no score can reach them.
constexpr Thresholds kNoAssociations{1.01, 1.01, 1.01};

struct PanelView {
    int panel_order = 1;
    PixelRect crop;
};

struct PageState {
    InferenceResponse detection;
    PageGraph graph;
    std::vector<PanelView> panels;
    std::vector<std::string> texts;
    std::vector<TranscriptLine> transcript;
    std::vector<std::string> captions;
    std::vector<GroundedCaption> grounded;
    std::vector<PhraseLinks> links;
};

json box_json(const BBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

json optional_index(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

json graph_json(const PageGraph& g) {
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        nodes.push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"box", box_json(n.box)},
                         {"panel", optional_index(g.panel_of[n.id])}});
    }
    json speakers = json::array(), tails = json::array();
    for (const auto& s : g.speaker_of) speakers.push_back(optional_index(s));
    for (const auto& t : g.tail_of) tails.push_back(optional_index(t));
    return {{"nodes", nodes}, {"clusters", g.cluster_of}, {"speakers", speakers}, {"tails", tails}};
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Rethrows the
/// failure with the lowest index so errors do not depend on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (count <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<PanelView> panel_views(const PageGraph& g, ImageDims dims) {
    std::vector<PanelView> out;
    if (g.panels.empty()) {
        out.push_back({1, {0, 0, dims.width, dims.height}});
        return out;
    }
    for (std::size_t p = 0; p < g.panels.size(); ++p) {
        out.push_back({static_cast<int>(p) + 1, panel_crop_rect(g.panel(p).box, dims)});
    }
    return out;
}

// Panel index for a text in the prose prompt: its assigned panel, else the
// panel whose centre is nearest to the text centre.
std::size_t prompt_panel_for_text(const PageState& s, std::size_t t) {
    if (s.graph.panels.empty()) return 0;
    if (const auto& p = s.graph.panel_of[s.graph.texts[t]]) return *p;
    const BBox& tb = s.graph.text(t).box;
    const double cx = (tb.x_min + tb.x_max) / 2, cy = (tb.y_min + tb.y_max) / 2;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < s.graph.panels.size(); ++p) {
        const BBox& pb = s.graph.panel(p).box;
        const double d = std::hypot((pb.x_min + pb.x_max) / 2 - cx, (pb.y_min + pb.y_max) / 2 - cy);
        if (d < best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

class PageRunner {
public:
    PageRunner(const PipelineConfig& config, const NameMap* names, InferenceService& inference, ChatService& chat,
               RunWriter& writer, const PageImage& image, std::string page_dir)
        : config_(config), names_(names), inference_(inference), chat_(chat), writer_(writer), image_(image),
          dir_(std::move(page_dir)), dims_(image.dims()) {}

    PageState state;
    std::map<std::string, ArtifactRef> artifacts;

    void run(Stage stage) {
        switch (stage) {
            case Stage::Detected: return detect();
            case Stage::Ocr: return ocr();
            case Stage::Captioned: return caption();
            case Stage::Grounded: return ground();
            case Stage::Prose: return prose();
            case Stage::Pending: return;
        }
    }

    /// Rebuilds in-memory state for a completed stage from its artifacts.
    /// Returns false when an artifact is missing, altered or unreadable.
    bool restore(Stage stage, const std::map<std::string, ArtifactRef>& recorded) {
        try {
            switch (stage) {
                case Stage::Detected: {
                    const auto doc = load(recorded, "detection.json");
                    if (!doc) return false;
                    adopt_detection(response_from_json(doc->at("response")));
                    return true;
                }
                case Stage::Ocr: {
                    const auto doc = load(recorded, "ocr.json");
                    const auto tr = load(recorded, "transcript.json");
                    if (!doc || !tr) return false;
                    state.texts = doc->at("texts").get<std::vector<std::string>>();
                    if (state.texts.size() != state.graph.texts.size()) return false;
                    state.transcript = transcript_from_json(*tr);
                    return true;
                }
                case Stage::Captioned: {
                    const auto doc = load(recorded, "captions.json");
                    if (!doc) return false;
                    state.captions.clear();
                    for (const auto& p : doc->at("panels")) state.captions.push_back(p.at("caption").get<std::string>());
                    return state.captions.size() == state.panels.size();
                }
                case Stage::Grounded: {
                    const auto doc = load(recorded, "grounded.json");
                    if (!doc) return false;
                    state.grounded.clear();
                    state.links.clear();
                    const auto& panels = doc->at("panels");
                    if (panels.size() != state.panels.size()) return false;
                    for (std::size_t p = 0; p < panels.size(); ++p) {
                        adopt_grounding(p, parse_grounded_caption(panels[p].at("tokens").get<TokenStream>()));
                    }
                    return true;
                }
                case Stage::Prose:
                    return load_text(recorded, "prose_prompt.txt") && load_text(recorded, "prose.txt");
                case Stage::Pending:
                    return true;
            }
        } catch (const std::exception& e) {
            spdlog::warn("{}: cannot restore stage {}: {}", dir_, to_string(stage), e.what());
        }
        return false;
    }

private:
    std::optional<json> load(const std::map<std::string, ArtifactRef>& recorded, const std::string& name) {
        auto content = load_text(recorded, name);
        if (!content) return std::nullopt;
        auto doc = json::parse(*content, nullptr, false);
        if (doc.is_discarded()) return std::nullopt;
        return doc;
    }

    std::optional<std::string> load_text(const std::map<std::string, ArtifactRef>& recorded, const std::string& name) {
        auto it = recorded.find(name);
        if (it == recorded.end()) return std::nullopt;
        auto content = writer_.read_artifact(it->second);
        if (content) artifacts[name] = it->second;
        return content;
    }

    void put(const std::string& name, const std::string& content) {
        artifacts[name] = writer_.write_artifact(dir_, name, content);
    }

    void adopt_detection(InferenceResponse resp) {
        validate_response(InferenceTask::Detect, resp, "");
        const auto records = parse_detection(resp.tokens);
        const Thresholds& th = resp.capabilities.association_heads ? config_.thresholds : kNoAssociations;
        state.graph = build_page_graph(records, *resp.scores, th, dims_);
        state.panels = panel_views(state.graph, dims_);
        state.detection = std::move(resp);
    }

    void adopt_grounding(std::size_t p, GroundedCaption gc) {
        std::vector<CharacterRef> chars;
        for (std::size_t c = 0; c < state.graph.characters.size(); ++c) {
            chars.push_back({state.graph.character(c).box, state.graph.cluster_of[c]});
        }
        const auto& crop = state.panels[p].crop;
        const PanelFrame frame{static_cast<double>(crop.x), static_cast<double>(crop.y), {crop.width, crop.height}};
        state.links.push_back(link_grounded(gc, chars, frame, config_.grounding_link_iou));
        state.grounded.push_back(std::move(gc));
    }

    void detect() {
        auto resp = inference_.infer({InferenceTask::Detect, image_.bytes(), dims_, std::nullopt});
        adopt_detection(resp);
        if (!state.detection.capabilities.association_heads) {
            spdlog::warn("{}: model has no association heads; clusters are singletons and speakers unknown", dir_);
        }
        put("detection.json", canonical_dump({{"response", response_to_json(state.detection)},
                                              {"graph", graph_json(state.graph)}}));
    }

    void ocr() {
        const auto resp = inference_.infer({InferenceTask::Ocr, image_.bytes(), dims_, std::nullopt});
        const auto records = parse_ocr(resp.tokens);
        std::vector<BBox> boxes;
        for (std::size_t t = 0; t < state.graph.texts.size(); ++t) boxes.push_back(state.graph.text(t).box);
        const auto rec = reconcile_ocr(boxes, records, dims_, config_.ocr_reconcile_iou);
        if (!rec.unmatched_ocr.empty()) {
            spdlog::info("{}: {} OCR records matched no detected text", dir_, rec.unmatched_ocr.size());
        }
        state.texts = rec.texts;
        state.transcript = generate_transcript(state.graph, state.texts, names_);
        put("ocr.json", canonical_dump({{"response", response_to_json(resp)},
                                        {"texts", state.texts},
                                        {"unmatched_detections", rec.unmatched_detections},
                                        {"unmatched_ocr", rec.unmatched_ocr}}));
        put("transcript.json", canonical_dump(transcript_to_json(state.transcript)));
    }

    void caption() {
        state.captions.assign(state.panels.size(), {});
        const std::string prompt = caption_prompt();
        parallel_for(state.panels.size(), config_.parallelism, [&](std::size_t p) {
            ChatRequest req{std::nullopt, prompt, image_.crop_png(state.panels[p].crop)};
            state.captions[p] = chat_.chat(req).text;
        });
        json panels = json::array();
        for (std::size_t p = 0; p < state.panels.size(); ++p) {
            const auto& c = state.panels[p].crop;
            panels.push_back({{"panel", state.panels[p].panel_order},
                              {"crop", {c.x, c.y, c.width, c.height}},
                              {"caption", state.captions[p]}});
        }
        put("captions.json", canonical_dump({{"panels", panels}}));
    }

    void ground() {
        std::vector<GroundedCaption> results(state.panels.size());
        parallel_for(state.panels.size(), config_.parallelism, [&](std::size_t p) {
            const auto& c = state.panels[p].crop;
            const auto resp = inference_.infer(
                {InferenceTask::Ground, image_.crop_png(c), {c.width, c.height}, state.captions[p]});
            results[p] = parse_grounded_caption(resp.tokens);
        });
        state.grounded.clear();
        state.links.clear();
        json panels = json::array();
        for (std::size_t p = 0; p < results.size(); ++p) {
            adopt_grounding(p, results[p]);
            const auto& gc = state.grounded[p];
            json phrases = json::array();
            const auto ph = gc.phrases();
            for (std::size_t k = 0; k < ph.size(); ++k) {
                json boxes = json::array(), chars = json::array();
                for (const auto& q : ph[k].boxes) boxes.push_back(json::array({q.bx_min, q.by_min, q.bx_max, q.by_max}));
                for (const auto& l : state.links[p][k]) chars.push_back(l ? json(*l) : json(nullptr));
                phrases.push_back({{"phrase", ph[k].phrase}, {"boxes", boxes}, {"characters", chars}});
            }
            panels.push_back({{"panel", state.panels[p].panel_order},
                              {"tokens", serialize_grounded_caption(gc)},
                              {"caption", gc.flatten()},
                              {"phrases", phrases},
                              {"description", render_character_aware_caption(gc, state.links[p], names_)}});
        }
        put("grounded.json", canonical_dump({{"panels", panels}}));
    }

    void prose() {
        std::vector<std::vector<std::string>> dialogue(state.panels.size());
        for (std::size_t t = 0; t < state.texts.size(); ++t) {
            if (state.texts[t].empty()) continue;
            std::string speaker = kUnknownSpeaker;
            if (const auto& s = state.graph.speaker_of[t]) speaker = character_label(state.graph.cluster_of[*s], names_);
            dialogue[prompt_panel_for_text(state, t)].push_back(speaker + ": " + state.texts[t]);
        }
        std::vector<PanelRecord> records;
        for (std::size_t p = 0; p < state.panels.size(); ++p) {
            std::string joined;
            for (const auto& line : dialogue[p]) joined += (joined.empty() ? "" : "\n") + line;
            records.push_back({state.panels[p].panel_order,
                               render_character_aware_caption(state.grounded[p], state.links[p], names_), joined});
        }
        const std::string prompt = prose_prompt(records, config_.style);
        put("prose_prompt.txt", prompt);
        put("prose.txt", chat_.chat({std::nullopt, prompt, std::nullopt}).text);
    }

    const PipelineConfig& config_;
    const NameMap* names_;
    InferenceService& inference_;
    ChatService& chat_;
    RunWriter& writer_;
    const PageImage& image_;
    std::string dir_;
    ImageDims dims_;
};

bool is_image_file(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    static const std::set<std::string> known = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"};
    return known.contains(ext);
}

}  // namespace

void PipelineConfig::validate() const {
    check_unit(thresholds.char_char, "char_char threshold");
    check_unit(thresholds.text_char, "text_char threshold");
    check_unit(thresholds.text_tail, "text_tail threshold");
    check_unit(ocr_reconcile_iou, "ocr reconcile IoU floor");
    check_unit(grounding_link_iou, "grounding link IoU floor");
    check_unit(eval_iou, "eval IoU floor");
    if (parallelism < 1) throw InputError("parallelism must be at least 1");
}

json PipelineConfig::snapshot() const {
    json names = nullptr;
    if (name_map) names = {{"path", name_map->string()}, {"sha256", sha256_hex(read_file(*name_map))}};
    return {{"thresholds",
             {{"char_char", thresholds.char_char}, {"text_char", thresholds.text_char}, {"text_tail", thresholds.text_tail}}},
            {"iou", {{"ocr_reconcile", ocr_reconcile_iou}, {"grounding_link", grounding_link_iou}, {"eval", eval_iou}}},
            {"endpoints", {{"infer", infer_url}, {"chat", chat_url}}},
            {"style", to_string(style)},
            {"name_map", names}};
}

std::size_t RunSummary::failed() const {
    return static_cast<std::size_t>(std::count_if(pages.begin(), pages.end(), [](const auto& p) { return p.error.has_value(); }));
}

std::vector<std::filesystem::path> list_page_images(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError(dir.string(), "pages directory does not exist");
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
    return out;
}

RunSummary run_pipeline(const std::filesystem::path& pages_dir, const std::filesystem::path& out_dir,
                        const PipelineConfig& config, InferenceService& inference, ChatService& chat) {
    config.validate();
    const auto pages = list_page_images(pages_dir);
    std::set<std::string> stems;
    for (const auto& p : pages) {
        if (!stems.insert(p.stem().string()).second) {
            throw InputError("two pages share the name '" + p.stem().string() + "'; output directories would collide");
        }
    }
    std::optional<NameMap> names;
    if (config.name_map) names = load_name_map(*config.name_map);

    RunWriter writer(out_dir);
    RunManifest manifest{kToolVersion, config.snapshot(), {}};
    std::optional<RunManifest> previous;
    try {
        previous = writer.load_manifest();
    } catch (const Error& e) {
        spdlog::warn("ignoring unreadable manifest: {}", e.what());
    }
    if (previous && previous->config != manifest.config) {
        spdlog::info("configuration changed since the last run; recomputing all stages");
        previous.reset();
    }

    RunSummary summary;
    for (const auto& path : pages) {
        PageEntry entry;
        entry.image = path.filename().string();
        PageOutcome outcome{entry.image, Stage::Pending, false, std::nullopt};
        try {
            const PageImage image = PageImage::load(path);
            entry.image_sha256 = sha256_hex(image.bytes());
            PageRunner runner(config, names ? &*names : nullptr, inference, chat, writer, image, path.stem().string());

            const PageEntry* prior = nullptr;
            if (previous) {
                for (const auto& e : previous->pages)
                    if (e.image == entry.image && e.image_sha256 == entry.image_sha256) prior = &e;
            }
            bool reuse = prior != nullptr;
            for (Stage stage : kPipelineStages) {
                reuse = reuse && static_cast<int>(stage) <= static_cast<int>(prior->stage) &&
                        runner.restore(stage, prior->artifacts);
                if (reuse) {
                    outcome.resumed = true;
                } else {
                    runner.run(stage);
                }
                entry.stage = stage;
                entry.artifacts = runner.artifacts;
                manifest.pages.push_back(entry);
                writer.write_manifest(manifest);
                manifest.pages.pop_back();
            }
        } catch (const std::exception& e) {
            entry.error = e.what();
            spdlog::error("{}: failed after stage {}: {}", entry.image, to_string(entry.stage), e.what());
        }
        outcome.reached = entry.stage;
        outcome.error = entry.error;
        manifest.pages.push_back(std::move(entry));
        writer.write_manifest(manifest);
        summary.pages.push_back(std::move(outcome));
    }
    writer.write_manifest(manifest);
    return summary;
}

}  // namespace mangapipe

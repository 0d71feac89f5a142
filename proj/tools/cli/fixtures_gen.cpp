// Synthetic end-to-end fixture: one 800x1200 page, four panels in a 2x2
// grid, five characters (three identities), six texts, four tails.
#include <array>
#include <iostream>
#include <map>
#include <mutex>

#include <unistd.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "commands.hpp"
#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"
#include "mangapipe/image.hpp"
#include "mangapipe/mock_server.hpp"
#include "mangapipe/transcript.hpp"

namespace mangapipe::cli {

using nlohmann::json;

namespace {

constexpr ImageDims kPage{800, 1200};

const std::array<BBox, 4> kPanels = {{
    {410, 10, 790, 570},   // right column first
    {10, 10, 390, 570},
    {410, 630, 790, 1190},
    {10, 630, 390, 1190},
}};

const std::array<BBox, 5> kChars = {{
    {500, 250, 700, 550},
    {100, 250, 300, 550},
    {450, 870, 620, 1170},
    {40, 870, 190, 1170},
    {210, 870, 360, 1170},
}};

struct TextItem {
    BBox box;
    const char* text;
};

const std::array<TextItem, 6> kTexts = {{
    {{600, 40, 770, 190}, "Where did everyone go?"},
    {{200, 40, 370, 190}, "They left at dawn."},
    {{40, 575, 300, 600}, "Meanwhile, the town was silent."},  // in the gutter, outside every panel
    {{620, 660, 780, 810}, "I have to find them."},
    {{220, 660, 380, 810}, "Wait for us!"},
    {{30, 660, 200, 810}, "We are coming too."},
}};

const std::array<BBox, 4> kTails = {{
    {640, 190, 680, 240},
    {240, 190, 280, 240},
    {660, 810, 700, 860},
    {260, 810, 300, 860},
}};

// char-char: identities {0,2}, {1,3}, {4}; (3,4) is a near miss.
const std::array<std::array<double, 5>, 5> kCharChar = {{
    {1.00, 0.12, 0.92, 0.08, 0.20},
    {0.12, 1.00, 0.10, 0.88, 0.15},
    {0.92, 0.10, 1.00, 0.05, 0.30},
    {0.08, 0.88, 0.05, 1.00, 0.41},
    {0.20, 0.15, 0.30, 0.41, 1.00},
}};

// text-char: t2 is narration with no speaker above threshold.
const std::array<std::array<double, 5>, 6> kTextChar = {{
    {0.95, 0.10, 0.30, 0.02, 0.03},
    {0.05, 0.90, 0.02, 0.20, 0.04},
    {0.10, 0.22, 0.05, 0.12, 0.08},
    {0.25, 0.03, 0.87, 0.05, 0.06},
    {0.02, 0.04, 0.10, 0.46, 0.81},
    {0.03, 0.15, 0.04, 0.78, 0.35},
}};

const std::array<std::array<double, 4>, 6> kTextTail = {{
    {0.93, 0.05, 0.02, 0.01},
    {0.04, 0.90, 0.03, 0.06},
    {0.10, 0.20, 0.05, 0.08},
    {0.02, 0.01, 0.88, 0.07},
    {0.01, 0.09, 0.04, 0.85},
    {0.02, 0.05, 0.03, 0.30},
}};

// OCR output: jittered boxes, left-to-right order, plus a sound effect that
// matches no detected text.
struct OcrItem {
    BBox box;
    const char* text;
};
const std::array<OcrItem, 7> kOcr = {{
    {{33, 664, 198, 806}, "We are coming too."},
    {{42, 577, 297, 599}, "Meanwhile, the town was silent."},
    {{203, 43, 366, 188}, "They left at dawn."},
    {{223, 663, 377, 807}, "Wait for us!"},
    {{480, 700, 560, 760}, "BAM"},
    {{603, 44, 766, 186}, "Where did everyone go?"},
    {{624, 662, 777, 806}, "I have to find them."},
}};

struct PhraseSpec {
    const char* before;
    const char* phrase;
    int character;
};

struct PanelScript {
    std::string caption;
    std::vector<PhraseSpec> phrases;
    const char* tail;
};

const std::array<PanelScript, 4> kPanelScripts = {{
    {"A boy with spiky hair stands alone in an empty street, looking around.",
     {{"", "A boy with spiky hair", 0}},
     " stands alone in an empty street, looking around."},
    {"A tall girl with a ponytail leans against a doorway with her arms crossed.",
     {{"", "A tall girl with a ponytail", 1}},
     " leans against a doorway with her arms crossed."},
    {"The boy clenches his fist and starts running down the road.",
     {{"", "The boy", 2}},
     " clenches his fist and starts running down the road."},
    {"The girl and a small child wave as they hurry after him.",
     {{"", "The girl", 3}, {" and ", "a small child", 4}},
     " wave as they hurry after him."},
}};

const char* const kProse =
    "Aki stands alone in the empty street and asks where everyone has gone. Nearby, Bo leans in a doorway "
    "with her arms crossed and tells him they left at dawn. The town is silent. Aki clenches his fist, "
    "determined to find them, and sets off down the road. Behind him a small child calls out for him to "
    "wait, and Bo hurries after them both, promising that they are coming too.";

const char* const kNames = "{\n  \"0\": \"Aki\",\n  \"1\": \"Bo\"\n}\n";

// Hand-derived from the scores above with default thresholds and the names
// map; checked against the pipeline output before anything is written.
const std::array<TranscriptLine, 6> kExpectedTranscript = {{
    {"Aki", "Where did everyone go?", 1, 0},
    {"Bo", "They left at dawn.", 2, 1},
    {"UNKNOWN", "Meanwhile, the town was silent.", -1, 2},
    {"Aki", "I have to find them.", 3, 3},
    {"C2", "Wait for us!", 4, 4},
    {"Bo", "We are coming too.", 4, 5},
}};

std::string draw_page() {
    cv::Mat img(kPage.height, kPage.width, CV_8UC3, cv::Scalar(255, 255, 255));
    auto rect = [](const BBox& b) {
        return cv::Rect(cv::Point(static_cast<int>(b.x_min), static_cast<int>(b.y_min)),
                        cv::Point(static_cast<int>(b.x_max), static_cast<int>(b.y_max)));
    };
    auto centre = [](const BBox& b) {
        return cv::Point(static_cast<int>((b.x_min + b.x_max) / 2), static_cast<int>((b.y_min + b.y_max) / 2));
    };
    for (const auto& p : kPanels) cv::rectangle(img, rect(p), cv::Scalar(0, 0, 0), 3);
    const std::array<cv::Scalar, 3> shades = {cv::Scalar(90, 90, 200), cv::Scalar(200, 120, 60), cv::Scalar(60, 170, 60)};
    const std::array<int, 5> identity = {0, 1, 0, 1, 2};
    for (std::size_t c = 0; c < kChars.size(); ++c) {
        const BBox& b = kChars[c];
        const int w = static_cast<int>(b.width()), h = static_cast<int>(b.height());
        const cv::Point head(static_cast<int>(b.x_min) + w / 2, static_cast<int>(b.y_min) + h / 5);
        cv::circle(img, head, std::min(w, h) / 5, shades[identity[c]], cv::FILLED);
        cv::rectangle(img, cv::Rect(static_cast<int>(b.x_min) + w / 4, static_cast<int>(b.y_min) + 2 * h / 5, w / 2, 3 * h / 5),
                      shades[identity[c]], cv::FILLED);
    }
    for (std::size_t t = 0; t < kTexts.size(); ++t) {
        const BBox& b = kTexts[t].box;
        if (t == 2) {
            cv::rectangle(img, rect(b), cv::Scalar(0, 0, 0), 1);
        } else {
            cv::ellipse(img, centre(b), cv::Size(static_cast<int>(b.width() / 2), static_cast<int>(b.height() / 2)), 0, 0,
                        360, cv::Scalar(0, 0, 0), 2);
        }
        cv::putText(img, kTexts[t].text, cv::Point(static_cast<int>(b.x_min) + 6, static_cast<int>(b.y_min + b.height() / 2)),
                    cv::FONT_HERSHEY_PLAIN, 0.8, cv::Scalar(0, 0, 0), 1, cv::LINE_8);
    }
    for (const auto& l : kTails) {
        const std::vector<cv::Point> tri = {cv::Point(static_cast<int>(l.x_min), static_cast<int>(l.y_min)),
                                            cv::Point(static_cast<int>(l.x_max), static_cast<int>(l.y_min)),
                                            cv::Point(static_cast<int>((l.x_min + l.x_max) / 2), static_cast<int>(l.y_max))};
        cv::fillConvexPoly(img, tri, cv::Scalar(0, 0, 0), cv::LINE_8);
    }
    std::vector<uchar> buf;
    cv::imencode(".png", img, buf, {cv::IMWRITE_PNG_COMPRESSION, 6});
    return {buf.begin(), buf.end()};
}

Matrix to_matrix(const auto& rows) {
    const std::size_t r = rows.size(), c = rows.empty() ? 0 : rows[0].size();
    std::vector<double> data;
    for (const auto& row : rows) data.insert(data.end(), row.begin(), row.end());
    return Matrix(r, c, std::move(data));
}

InferenceResponse detection_response() {
    std::vector<DetectionRecord> records;
    auto add = [&](const BBox& b, NodeKind k) { records.push_back({quantize(b, kPage), k, records.size()}); };
    for (const auto& b : kPanels) add(b, NodeKind::Panel);
    for (const auto& b : kChars) add(b, NodeKind::Character);
    for (const auto& t : kTexts) add(t.box, NodeKind::Text);
    for (const auto& b : kTails) add(b, NodeKind::Tail);
    return {serialize_detection(records), ScoreTable{to_matrix(kTextChar), to_matrix(kCharChar), to_matrix(kTextTail)}, {}};
}

InferenceResponse ocr_response() {
    std::vector<OcrRecord> records;
    for (const auto& o : kOcr) records.push_back({o.text, quantize(o.box, kPage), records.size()});
    return {serialize_ocr(records), std::nullopt, {}};
}

/// Crop rectangles exactly as the pipeline derives them: from the
/// quantized-then-dequantized panel boxes.
std::array<PixelRect, 4> crop_rects() {
    std::array<PixelRect, 4> out;
    for (std::size_t p = 0; p < kPanels.size(); ++p) out[p] = panel_crop_rect(dequantize(quantize(kPanels[p], kPage), kPage), kPage);
    return out;
}

InferenceResponse ground_response(std::size_t p, const PixelRect& crop) {
    const ImageDims dims{crop.width, crop.height};
    GroundedCaption gc;
    for (const auto& ph : kPanelScripts[p].phrases) {
        if (*ph.before) gc.segments.emplace_back(PlainSegment{ph.before});
        // grounding is a little loose, as a model's would be
        BBox b = kChars[ph.character].translated(-crop.x, -crop.y);
        b = {std::max(0.0, b.x_min - 4), std::max(0.0, b.y_min + 3), std::min<double>(dims.width, b.x_max + 2),
             std::min<double>(dims.height, b.y_max - 5)};
        gc.segments.emplace_back(PhraseSegment{ph.phrase, {quantize(b, dims)}});
    }
    gc.segments.emplace_back(PlainSegment{kPanelScripts[p].tail});
    if (gc.flatten() != kPanelScripts[p].caption) throw Error("fixture script: panel caption and phrases disagree");
    return {serialize_grounded_caption(gc), std::nullopt, {}};
}

/// Answers exactly the requests the scenario expects and records each one
/// together with its wire response.
class ScriptedModel final : public InferenceService, public ChatService {
public:
    ScriptedModel(std::string page_bytes, const PageImage& page) : page_bytes_(std::move(page_bytes)) {
        const auto crops = crop_rects();
        for (std::size_t p = 0; p < crops.size(); ++p) {
            crop_panel_[sha256_hex(page.crop_png(crops[p]))] = p;
            crops_[p] = crops[p];
        }
    }

    struct Recorded {
        std::string name;
        json entry;
        std::string body;
    };

    InferenceResponse infer(const InferenceRequest& req) override {
        req.validate();
        InferenceResponse resp;
        std::string name;
        if (req.task == InferenceTask::Ground) {
            const std::size_t p = panel_for(req.image);
            if (req.caption != kPanelScripts[p].caption) throw Error("unexpected ground caption for panel " + std::to_string(p + 1));
            resp = ground_response(p, crops_[p]);
            name = "ground_p" + std::to_string(p + 1) + ".json";
        } else {
            if (req.image != page_bytes_) throw Error("unexpected page image");
            resp = req.task == InferenceTask::Detect ? detection_response() : ocr_response();
            name = std::string(to_string(req.task)) + ".json";
        }
        const std::string body = canonical_dump(response_to_json(resp));
        const auto key = FixtureStore::key_for(req);
        json entry = {{"task", key.task}, {"image_sha256", key.primary}, {"response", name}};
        if (!key.secondary.empty()) entry["caption_sha256"] = key.secondary;
        record({name, entry, body});
        return decode_response(req.task, body);
    }

    Capabilities health() override { return {}; }

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        std::string text, name;
        if (req.image) {
            if (req.user != caption_prompt()) throw Error("unexpected chat prompt with image");
            const std::size_t p = panel_for(*req.image);
            text = kPanelScripts[p].caption;
            name = "chat_caption_p" + std::to_string(p + 1) + ".json";
        } else {
            text = kProse;
            name = "chat_prose.json";
        }
        const std::string body = canonical_dump(chat_response_to_json({text}));
        record({name, {{"task", "chat"}, {"request_sha256", chat_request_key(req)}, {"response", name}}, body});
        return {text};
    }

    std::map<std::string, Recorded> recorded() const {
        std::lock_guard lock(mu_);
        return recorded_;
    }

private:
    std::size_t panel_for(const std::string& image) const {
        auto it = crop_panel_.find(sha256_hex(image));
        if (it == crop_panel_.end()) throw Error("request image matches no panel crop");
        return it->second;
    }

    void record(Recorded r) {
        std::lock_guard lock(mu_);
        auto name = r.name;
        recorded_[name] = std::move(r);
    }

    std::string page_bytes_;
    std::map<std::string, std::size_t> crop_panel_;
    std::array<PixelRect, 4> crops_{};
    mutable std::mutex mu_;
    std::map<std::string, Recorded> recorded_;
};

}  // namespace

int cmd_fixtures_gen(const FixturesGenOptions& opts, std::ostream& out, std::ostream& err) {
    namespace fs = std::filesystem;
    const fs::path e2e = opts.root / "tests" / "fixtures" / "e2e";
    const fs::path golden = opts.root / "tests" / "golden";
    const fs::path scratch = fs::temp_directory_path() / ("mangapipe-fixtures-" + std::to_string(::getpid()));
    try {
        fs::remove_all(scratch);
        const std::string png = draw_page();
        write_file_atomic(scratch / "pages" / "page01.png", png);
        write_file_atomic(scratch / "names.json", kNames);
        const PageImage page = PageImage::decode(png);
        ScriptedModel model(png, page);

        PipelineConfig config;
        config.name_map = scratch / "names.json";
        config.parallelism = 1;
        const RunSummary summary = run_pipeline(scratch / "pages", scratch / "out", config, model, model);
        if (summary.failed() != 0) throw Error("pipeline failed on the synthetic page: " + *summary.pages[0].error);

        const fs::path page_out = scratch / "out" / "pages" / "page01";
        const auto transcript = transcript_from_json(read_json_file(page_out / "transcript.json"));
        if (transcript != std::vector<TranscriptLine>(kExpectedTranscript.begin(), kExpectedTranscript.end())) {
            throw Error("pipeline transcript differs from the hand-derived expectation");
        }

        fs::remove_all(e2e);
        write_file_atomic(e2e / "pages" / "page01.png", png);
        write_file_atomic(e2e / "names.json", kNames);
        json entries = json::array();
        for (const auto& [name, r] : model.recorded()) {
            write_file_atomic(e2e / "server" / name, r.body);
            entries.push_back(r.entry);
        }
        write_file_atomic(e2e / "server" / "fixtures.json",
                          canonical_dump({{"version", kProtocolVersion}, {"entries", entries}}));
        for (const char* name : {"transcript.json", "prose_prompt.txt", "prose.txt", "grounded.json", "captions.json"}) {
            write_file_atomic(golden / name, read_file(page_out / name));
        }
        fs::remove_all(scratch);
        out << "wrote " << entries.size() << " fixtures under " << e2e.string() << " and goldens under "
            << golden.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        fs::remove_all(scratch);
        return kExitFailures;
    }
}

}  // namespace mangapipe::cli

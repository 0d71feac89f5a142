#include "mangapipe/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"

namespace mangapipe {

using nlohmann::json;

namespace {

struct Ctx {
    SchemaMode mode;
    std::vector<std::string>* warnings;
};

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& at, Ctx& ctx) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
        if (ctx.mode == SchemaMode::Strict) throw SchemaError(at + "/" + key, "unknown field");
        ctx.warnings->push_back(at + "/" + key + ": unknown field ignored");
    }
}

const json& require(const json& obj, const char* key, const std::string& at) {
    if (!obj.is_object()) throw SchemaError(at, "expected object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(at + "/" + key, "missing field");
    return *it;
}

const json* optional_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string get_string(const json& j, const std::string& at) {
    if (!j.is_string()) throw SchemaError(at, "expected string");
    return j.get<std::string>();
}

long long get_integer(const json& j, const std::string& at) {
    if (!j.is_number_integer()) throw SchemaError(at, "expected integer");
    return j.get<long long>();
}

double get_number(const json& j, const std::string& at) {
    if (!j.is_number()) throw SchemaError(at, "expected number");
    return j.get<double>();
}

const json& get_array(const json& j, const std::string& at) {
    if (!j.is_array()) throw SchemaError(at, "expected array");
    return j;
}

void check_version(const json& doc) {
    const auto& v = require(doc, "version", "");
    if (get_integer(v, "/version") != kSchemaVersion) {
        throw SchemaError("/version", "unsupported schema version " + v.dump());
    }
}

BBox parse_bbox(const json& j, const std::string& at) {
    if (!j.is_array() || j.size() != 4) throw SchemaError(at, "box must be [x_min, y_min, x_max, y_max]");
    BBox b{get_number(j[0], at + "/0"), get_number(j[1], at + "/1"), get_number(j[2], at + "/2"),
           get_number(j[3], at + "/3")};
    if (!b.valid()) throw SchemaError(at, "box must be finite, nonnegative and ordered");
    return b;
}

QuantizedBox parse_qbox(const json& j, const std::string& at) {
    if (!j.is_array() || j.size() != 4) throw SchemaError(at, "box must be four bin indices");
    QuantizedBox q{static_cast<int>(get_integer(j[0], at + "/0")), static_cast<int>(get_integer(j[1], at + "/1")),
                   static_cast<int>(get_integer(j[2], at + "/2")), static_cast<int>(get_integer(j[3], at + "/3"))};
    if (!q.valid()) throw SchemaError(at, "bin indices must lie in [0, 999] and be ordered");
    return q;
}

EdgeList parse_edges(const json& j, const std::string& at, std::size_t n_left, std::size_t n_right, bool symmetric) {
    EdgeList edges;
    const auto& arr = get_array(j, at);
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string here = at + "/" + std::to_string(k);
        if (!arr[k].is_array() || arr[k].size() != 2) throw SchemaError(here, "edge must be a pair of indices");
        const long long a = get_integer(arr[k][0], here + "/0");
        const long long b = get_integer(arr[k][1], here + "/1");
        if (a < 0 || static_cast<std::size_t>(a) >= n_left) {
            throw SchemaError(here + "/0", "index " + std::to_string(a) + " out of range (" + std::to_string(n_left) + ")");
        }
        if (b < 0 || static_cast<std::size_t>(b) >= n_right) {
            throw SchemaError(here + "/1", "index " + std::to_string(b) + " out of range (" + std::to_string(n_right) + ")");
        }
        if (symmetric && a == b) throw SchemaError(here, "self edge");
        auto e = std::pair(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        if (symmetric && e.first > e.second) std::swap(e.first, e.second);
        edges.push_back(e);
    }
    return edges;
}

void canonicalize(EdgeList& edges) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

std::vector<int> relabel_by_first_appearance(const std::vector<int>& labels) {
    std::unordered_map<int, int> remap;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(remap.try_emplace(l, static_cast<int>(remap.size())).first->second);
    return out;
}

json edges_to_json(const EdgeList& edges) {
    json arr = json::array();
    for (const auto& [a, b] : edges) arr.push_back({a, b});
    return arr;
}

json bbox_to_json(const BBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

json qbox_to_json(const QuantizedBox& q) { return json::array({q.bx_min, q.by_min, q.bx_max, q.by_max}); }

PageAnnotation parse_page(const json& p, const std::string& at, Ctx& ctx) {
    if (!p.is_object()) throw SchemaError(at, "expected object");
    check_keys(p, {"image", "image_sha256", "width", "height", "nodes", "edges", "cluster_labels", "texts", "scores"}, at,
               ctx);
    PageAnnotation page;
    page.image_ref = get_string(require(p, "image", at), at + "/image");
    if (const auto* h = optional_field(p, "image_sha256")) page.image_sha256 = get_string(*h, at + "/image_sha256");
    const long long w = get_integer(require(p, "width", at), at + "/width");
    const long long h = get_integer(require(p, "height", at), at + "/height");
    if (w < 1 || w > INT32_MAX) throw SchemaError(at + "/width", "must be a positive integer");
    if (h < 1 || h > INT32_MAX) throw SchemaError(at + "/height", "must be a positive integer");
    page.dims = {static_cast<int>(w), static_cast<int>(h)};

    const auto& nodes = get_array(require(p, "nodes", at), at + "/nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string here = at + "/nodes/" + std::to_string(i);
        if (!nodes[i].is_object()) throw SchemaError(here, "expected object");
        check_keys(nodes[i], {"kind", "box"}, here, ctx);
        const std::string kind = get_string(require(nodes[i], "kind", here), here + "/kind");
        const auto k = node_kind_from_string(kind);
        if (!k) throw SchemaError(here + "/kind", "unknown kind '" + kind + "'");
        page.nodes.push_back({*k, parse_bbox(require(nodes[i], "box", here), here + "/box")});
    }
    const std::size_t n_char = page.count(NodeKind::Character);
    const std::size_t n_text = page.count(NodeKind::Text);
    const std::size_t n_tail = page.count(NodeKind::Tail);

    if (const auto* e = optional_field(p, "edges")) {
        const std::string here = at + "/edges";
        if (!e->is_object()) throw SchemaError(here, "expected object");
        check_keys(*e, {"text_char", "char_char", "text_tail"}, here, ctx);
        if (const auto* x = optional_field(*e, "text_char"))
            page.edges.text_char = parse_edges(*x, here + "/text_char", n_text, n_char, false);
        if (const auto* x = optional_field(*e, "char_char"))
            page.edges.char_char = parse_edges(*x, here + "/char_char", n_char, n_char, true);
        if (const auto* x = optional_field(*e, "text_tail"))
            page.edges.text_tail = parse_edges(*x, here + "/text_tail", n_text, n_tail, false);
    }
    if (const auto* c = optional_field(p, "cluster_labels")) {
        const auto& arr = get_array(*c, at + "/cluster_labels");
        if (arr.size() != n_char) {
            throw SchemaError(at + "/cluster_labels", "expected " + std::to_string(n_char) + " labels, got " +
                                                          std::to_string(arr.size()));
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const long long l = get_integer(arr[i], at + "/cluster_labels/" + std::to_string(i));
            if (l < 0 || l > INT32_MAX) throw SchemaError(at + "/cluster_labels/" + std::to_string(i), "negative label");
            page.cluster_labels.push_back(static_cast<int>(l));
        }
    }
    if (const auto* t = optional_field(p, "texts")) {
        const auto& arr = get_array(*t, at + "/texts");
        if (arr.size() != n_text) {
            throw SchemaError(at + "/texts", "expected " + std::to_string(n_text) + " texts, got " +
                                                 std::to_string(arr.size()));
        }
        for (std::size_t i = 0; i < arr.size(); ++i)
            page.texts.push_back(get_string(arr[i], at + "/texts/" + std::to_string(i)));
    }
    if (const auto* s = optional_field(p, "scores")) {
        const std::string here = at + "/scores";
        if (s->is_object()) check_keys(*s, {"text_char", "char_char", "text_tail"}, here, ctx);
        ScoreTable table = score_table_from_json(*s, here);
        auto shape = [&](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
            if (m.rows() != r || m.cols() != c) {
                throw SchemaError(here + "/" + name, "shape does not match node counts");
            }
        };
        shape(table.text_char, n_text, n_char, "text_char");
        shape(table.char_char, n_char, n_char, "char_char");
        shape(table.text_tail, n_text, n_tail, "text_tail");
        page.scores = std::move(table);
    }
    return page;
}

// Code point offset -> byte offset; throws on invalid UTF-8.
std::vector<std::size_t> code_point_offsets(const std::string& s, const std::string& at) {
    std::vector<std::size_t> offsets;
    std::size_t i = 0;
    while (i < s.size()) {
        offsets.push_back(i);
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) throw SchemaError(at, "caption is not valid UTF-8");
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) throw SchemaError(at, "caption is not valid UTF-8");
        }
        i += len;
    }
    offsets.push_back(s.size());
    return offsets;
}

std::size_t code_point_count(const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) >> 6) != 0x2; }));
}

CaptionAnnotation parse_caption(const json& c, const std::string& at, Ctx& ctx) {
    if (!c.is_object()) throw SchemaError(at, "expected object");
    check_keys(c, {"panel_image", "caption", "grounded_spans"}, at, ctx);
    CaptionAnnotation out;
    out.panel_image_ref = get_string(require(c, "panel_image", at), at + "/panel_image");
    out.caption = get_string(require(c, "caption", at), at + "/caption");
    const std::size_t length = code_point_offsets(out.caption, at + "/caption").size() - 1;

    if (const auto* spans = optional_field(c, "grounded_spans")) {
        const auto& arr = get_array(*spans, at + "/grounded_spans");
        std::size_t prev_end = 0;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string here = at + "/grounded_spans/" + std::to_string(i);
            if (!arr[i].is_object()) throw SchemaError(here, "expected object");
            check_keys(arr[i], {"start", "end", "boxes"}, here, ctx);
            const long long s = get_integer(require(arr[i], "start", here), here + "/start");
            const long long e = get_integer(require(arr[i], "end", here), here + "/end");
            if (s < 0 || e <= s || static_cast<std::size_t>(e) > length) {
                throw SchemaError(here, "span [" + std::to_string(s) + ", " + std::to_string(e) +
                                            ") is empty or outside the caption");
            }
            if (static_cast<std::size_t>(s) < prev_end) throw SchemaError(here, "spans overlap or are unsorted");
            prev_end = static_cast<std::size_t>(e);
            GroundedSpan span{static_cast<std::size_t>(s), static_cast<std::size_t>(e), {}};
            const auto& boxes = get_array(require(arr[i], "boxes", here), here + "/boxes");
            if (boxes.empty()) throw SchemaError(here + "/boxes", "span needs at least one box");
            for (std::size_t b = 0; b < boxes.size(); ++b)
                span.boxes.push_back(parse_qbox(boxes[b], here + "/boxes/" + std::to_string(b)));
            out.grounded_spans.push_back(std::move(span));
        }
    }
    return out;
}

}  // namespace

std::size_t PageAnnotation::count(NodeKind kind) const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [&](const auto& n) { return n.kind == kind; }));
}

std::vector<Node> PageAnnotation::as_nodes() const {
    std::vector<Node> out;
    out.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) out.push_back({i, nodes[i].kind, nodes[i].box, i});
    return out;
}

Loaded<PageAnnotation> parse_page_annotations(const json& doc, SchemaMode mode) {
    Loaded<PageAnnotation> out;
    Ctx ctx{mode, &out.warnings};
    if (!doc.is_object()) throw SchemaError("", "expected object");
    check_keys(doc, {"version", "pages"}, "", ctx);
    check_version(doc);
    const auto& pages = get_array(require(doc, "pages", ""), "/pages");
    for (std::size_t i = 0; i < pages.size(); ++i) out.items.push_back(parse_page(pages[i], "/pages/" + std::to_string(i), ctx));
    return out;
}

Loaded<PageAnnotation> load_page_annotations(const std::filesystem::path& path, SchemaMode mode) {
    return parse_page_annotations(read_json_file(path), mode);
}

json page_annotations_to_json(std::span<const PageAnnotation> pages) {
    json arr = json::array();
    for (const auto& p : pages) {
        json node_arr = json::array();
        for (const auto& n : p.nodes) node_arr.push_back({{"kind", to_string(n.kind)}, {"box", bbox_to_json(n.box)}});
        PageEdges edges = p.edges;
        for (auto& [a, b] : edges.char_char)
            if (a > b) std::swap(a, b);
        canonicalize(edges.text_char);
        canonicalize(edges.char_char);
        canonicalize(edges.text_tail);
        json page = {{"image", p.image_ref},
                     {"width", p.dims.width},
                     {"height", p.dims.height},
                     {"nodes", node_arr},
                     {"edges",
                      {{"text_char", edges_to_json(edges.text_char)},
                       {"char_char", edges_to_json(edges.char_char)},
                       {"text_tail", edges_to_json(edges.text_tail)}}}};
        if (!p.image_sha256.empty()) page["image_sha256"] = p.image_sha256;
        if (!p.cluster_labels.empty()) page["cluster_labels"] = relabel_by_first_appearance(p.cluster_labels);
        if (!p.texts.empty()) page["texts"] = p.texts;
        if (p.scores) page["scores"] = score_table_to_json(*p.scores);
        arr.push_back(std::move(page));
    }
    return {{"version", kSchemaVersion}, {"pages", arr}};
}

void save_page_annotations(const std::filesystem::path& path, std::span<const PageAnnotation> pages) {
    write_file_atomic(path, canonical_dump(page_annotations_to_json(pages)));
}

Loaded<CaptionAnnotation> parse_caption_annotations(const json& doc, SchemaMode mode) {
    Loaded<CaptionAnnotation> out;
    Ctx ctx{mode, &out.warnings};
    if (!doc.is_object()) throw SchemaError("", "expected object");
    check_keys(doc, {"version", "captions"}, "", ctx);
    check_version(doc);
    const auto& caps = get_array(require(doc, "captions", ""), "/captions");
    for (std::size_t i = 0; i < caps.size(); ++i)
        out.items.push_back(parse_caption(caps[i], "/captions/" + std::to_string(i), ctx));
    return out;
}

Loaded<CaptionAnnotation> load_caption_annotations(const std::filesystem::path& path, SchemaMode mode) {
    return parse_caption_annotations(read_json_file(path), mode);
}

json caption_annotations_to_json(std::span<const CaptionAnnotation> captions) {
    json arr = json::array();
    for (const auto& c : captions) {
        json spans = json::array();
        for (const auto& s : c.grounded_spans) {
            json boxes = json::array();
            for (const auto& b : s.boxes) boxes.push_back(qbox_to_json(b));
            spans.push_back({{"start", s.start}, {"end", s.end}, {"boxes", boxes}});
        }
        arr.push_back({{"panel_image", c.panel_image_ref}, {"caption", c.caption}, {"grounded_spans", spans}});
    }
    return {{"version", kSchemaVersion}, {"captions", arr}};
}

void save_caption_annotations(const std::filesystem::path& path, std::span<const CaptionAnnotation> captions) {
    write_file_atomic(path, canonical_dump(caption_annotations_to_json(captions)));
}

GroundedCaption to_grounded_caption(const CaptionAnnotation& a) {
    const auto offsets = code_point_offsets(a.caption, "/caption");
    GroundedCaption out;
    std::size_t cursor = 0, cursor_cp = 0;  // bytes, code points
    for (const auto& span : a.grounded_spans) {
        if (span.end >= offsets.size() || span.start < cursor_cp || span.end <= span.start) {
            throw InputError("caption span out of order or range");
        }
        const std::size_t bs = offsets[span.start], be = offsets[span.end];
        if (bs > cursor) out.segments.emplace_back(PlainSegment{a.caption.substr(cursor, bs - cursor)});
        out.segments.emplace_back(PhraseSegment{a.caption.substr(bs, be - bs), span.boxes});
        cursor = be;
        cursor_cp = span.end;
    }
    if (cursor < a.caption.size()) out.segments.emplace_back(PlainSegment{a.caption.substr(cursor)});
    return out;
}

CaptionAnnotation to_caption_annotation(const GroundedCaption& caption, std::string panel_image_ref) {
    CaptionAnnotation out;
    out.panel_image_ref = std::move(panel_image_ref);
    std::size_t cp = 0;
    for (const auto& seg : caption.segments) {
        if (const auto* p = std::get_if<PlainSegment>(&seg)) {
            out.caption += p->text;
            cp += code_point_count(p->text);
            continue;
        }
        const auto& ph = std::get<PhraseSegment>(seg);
        const std::size_t len = code_point_count(ph.phrase);
        out.caption += ph.phrase;
        out.grounded_spans.push_back({cp, cp + len, ph.boxes});
        cp += len;
    }
    return out;
}

NameMap parse_name_map(const json& doc) {
    if (!doc.is_object()) throw SchemaError("", "name map must be an object of label -> name");
    NameMap names;
    for (const auto& [key, value] : doc.items()) {
        int label = -1;
        try {
            std::size_t used = 0;
            label = std::stoi(key, &used);
            if (used != key.size()) label = -1;
        } catch (const std::exception&) {
            label = -1;
        }
        if (label < 0) throw SchemaError("/" + key, "cluster label must be a nonnegative integer");
        const std::string name = get_string(value, "/" + key);
        if (name.empty()) throw SchemaError("/" + key, "empty name");
        if (!names.emplace(label, name).second) throw SchemaError("/" + key, "duplicate label");
    }
    return names;
}

NameMap load_name_map(const std::filesystem::path& path) { return parse_name_map(read_json_file(path)); }

json matrix_to_json(const Matrix& m) {
    return {{"shape", {m.rows(), m.cols()}}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j, const std::string& at) {
    if (!j.is_object()) throw SchemaError(at, "expected {shape, data}");
    const auto& shape = get_array(require(j, "shape", at), at + "/shape");
    if (shape.size() != 2) throw SchemaError(at + "/shape", "expected [rows, cols]");
    const long long r = get_integer(shape[0], at + "/shape/0");
    const long long c = get_integer(shape[1], at + "/shape/1");
    if (r < 0 || c < 0) throw SchemaError(at + "/shape", "negative dimension");
    const auto& data = get_array(require(j, "data", at), at + "/data");
    if (data.size() != static_cast<std::size_t>(r * c)) {
        throw SchemaError(at + "/data", "expected " + std::to_string(r * c) + " values, got " + std::to_string(data.size()));
    }
    std::vector<double> values;
    values.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = get_number(data[i], at + "/data/" + std::to_string(i));
        if (!(v >= 0.0 && v <= 1.0)) throw SchemaError(at + "/data/" + std::to_string(i), "score outside [0, 1]");
        values.push_back(v);
    }
    return Matrix(static_cast<std::size_t>(r), static_cast<std::size_t>(c), std::move(values));
}

json score_table_to_json(const ScoreTable& t) {
    return {{"text_char", matrix_to_json(t.text_char)},
            {"char_char", matrix_to_json(t.char_char)},
            {"text_tail", matrix_to_json(t.text_tail)}};
}

ScoreTable score_table_from_json(const json& j, const std::string& at) {
    if (!j.is_object()) throw SchemaError(at, "expected object");
    return {matrix_from_json(require(j, "text_char", at), at + "/text_char"),
            matrix_from_json(require(j, "char_char", at), at + "/char_char"),
            matrix_from_json(require(j, "text_tail", at), at + "/text_tail")};
}

// ---------------------------------------------------------------------------

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::Pending: return "pending";
        case Stage::Detected: return "detected";
        case Stage::Ocr: return "ocr";
        case Stage::Captioned: return "captioned";
        case Stage::Grounded: return "grounded";
        case Stage::Prose: return "prose";
    }
    return "pending";
}

json manifest_to_json(const RunManifest& m) {
    json pages = json::array();
    for (const auto& p : m.pages) {
        json stages = json::object();
        for (Stage s : kPipelineStages) stages[std::string(to_string(s))] = static_cast<int>(s) <= static_cast<int>(p.stage);
        json artifacts = json::object();
        for (const auto& [name, ref] : p.artifacts) artifacts[name] = {{"path", ref.path}, {"sha256", ref.sha256}};
        pages.push_back({{"image", p.image},
                         {"image_sha256", p.image_sha256},
                         {"stages", stages},
                         {"status", p.error ? "failed" : (p.stage == Stage::Prose ? "complete" : "incomplete")},
                         {"error", p.error ? json(*p.error) : json(nullptr)},
                         {"artifacts", artifacts}});
    }
    return {{"version", kSchemaVersion}, {"tool_version", m.tool_version}, {"config", m.config}, {"pages", pages}};
}

RunManifest manifest_from_json(const json& j) {
    check_version(j);
    RunManifest m;
    m.tool_version = get_string(require(j, "tool_version", ""), "/tool_version");
    m.config = require(j, "config", "");
    const auto& pages = get_array(require(j, "pages", ""), "/pages");
    for (std::size_t i = 0; i < pages.size(); ++i) {
        const std::string at = "/pages/" + std::to_string(i);
        const auto& p = pages[i];
        PageEntry e;
        e.image = get_string(require(p, "image", at), at + "/image");
        e.image_sha256 = get_string(require(p, "image_sha256", at), at + "/image_sha256");
        const auto& stages = require(p, "stages", at);
        bool open = true;
        for (Stage s : kPipelineStages) {
            const std::string key(to_string(s));
            const auto& flag = require(stages, key.c_str(), at + "/stages");
            if (!flag.is_boolean()) throw SchemaError(at + "/stages/" + key, "expected boolean");
            if (flag.get<bool>()) {
                if (!open) throw SchemaError(at + "/stages/" + key, "stage completed after an incomplete stage");
                e.stage = s;
            } else {
                open = false;
            }
        }
        if (const auto* err = optional_field(p, "error")) e.error = get_string(*err, at + "/error");
        if (const auto* arts = optional_field(p, "artifacts")) {
            for (const auto& [name, ref] : arts->items()) {
                const std::string here = at + "/artifacts/" + name;
                e.artifacts[name] = {get_string(require(ref, "path", here), here + "/path"),
                                     get_string(require(ref, "sha256", here), here + "/sha256")};
            }
        }
        m.pages.push_back(std::move(e));
    }
    return m;
}

std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError(path.string(), "read failed");
    return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("", path.string() + " is not valid JSON");
    return doc;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path().string(), ec.message());
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(tmp, "cannot open for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError(tmp, "write failed");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError(path.string(), ec.message());
}

RunWriter::RunWriter(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw IoError(root_.string(), ec.message());
}

std::optional<RunManifest> RunWriter::load_manifest() const {
    if (!std::filesystem::exists(manifest_path())) return std::nullopt;
    return manifest_from_json(read_json_file(manifest_path()));
}

ArtifactRef RunWriter::write_artifact(const std::string& page_dir, const std::string& name, std::string_view content) {
    const std::string rel = "pages/" + page_dir + "/" + name;
    write_file_atomic(root_ / rel, content);
    return {rel, sha256_hex(content)};
}

void RunWriter::write_manifest(const RunManifest& manifest) {
    write_file_atomic(manifest_path(), canonical_dump(manifest_to_json(manifest)));
}

std::optional<std::string> RunWriter::read_artifact(const ArtifactRef& ref) const {
    const auto path = root_ / ref.path;
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::string content = read_file(path);
    if (sha256_hex(content) != ref.sha256) return std::nullopt;
    return content;
}

}  // namespace mangapipe

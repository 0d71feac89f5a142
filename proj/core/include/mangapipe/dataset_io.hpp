#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mangapipe/eval.hpp"
#include "mangapipe/geometry.hpp"
#include "mangapipe/page_graph.hpp"
#include "mangapipe/token_codec.hpp"
#include "mangapipe/transcript.hpp"

namespace mangapipe {

inline constexpr int kSchemaVersion = 1;

enum class SchemaMode {
    Strict,   // unknown fields are errors
    Lenient,  // unknown fields become warnings
};

template <class T>
struct Loaded {
    std::vector<T> items;
    std::vector<std::string> warnings;
};

struct AnnotatedNode {
    NodeKind kind = NodeKind::Panel;
    BBox box;

    friend bool operator==(const AnnotatedNode&, const AnnotatedNode&) = default;
};

/// Edge endpoints are per-kind positions (i-th text, j-th character, ...).
struct PageEdges {
    EdgeList text_char;
    EdgeList char_char;  // stored with a < b
    EdgeList text_tail;

    friend bool operator==(const PageEdges&, const PageEdges&) = default;
};

struct PageAnnotation {
    std::string image_ref;
    std::string image_sha256;  // may be empty
    ImageDims dims;
    std::vector<AnnotatedNode> nodes;
    PageEdges edges;
    std::vector<int> cluster_labels;  // per character, empty when absent
    std::vector<std::string> texts;   // per text node, empty when absent
    std::optional<ScoreTable> scores;  // prediction files only

    std::size_t count(NodeKind kind) const;
    std::vector<Node> as_nodes() const;

    friend bool operator==(const PageAnnotation&, const PageAnnotation&) = default;
};

Loaded<PageAnnotation> parse_page_annotations(const nlohmann::json& doc, SchemaMode mode = SchemaMode::Strict);
Loaded<PageAnnotation> load_page_annotations(const std::filesystem::path& path, SchemaMode mode = SchemaMode::Strict);
/// Canonical form: edges sorted and deduplicated, cluster labels renumbered
/// by first appearance.
nlohmann::json page_annotations_to_json(std::span<const PageAnnotation> pages);
void save_page_annotations(const std::filesystem::path& path, std::span<const PageAnnotation> pages);

/// Grounded span over a caption, in Unicode code points [start, end).
struct GroundedSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::vector<QuantizedBox> boxes;  // 1000-bin coordinates over the panel image

    friend bool operator==(const GroundedSpan&, const GroundedSpan&) = default;
};

struct CaptionAnnotation {
    std::string panel_image_ref;
    std::string caption;
    std::vector<GroundedSpan> grounded_spans;

    friend bool operator==(const CaptionAnnotation&, const CaptionAnnotation&) = default;
};

Loaded<CaptionAnnotation> parse_caption_annotations(const nlohmann::json& doc, SchemaMode mode = SchemaMode::Strict);
Loaded<CaptionAnnotation> load_caption_annotations(const std::filesystem::path& path,
                                                   SchemaMode mode = SchemaMode::Strict);
nlohmann::json caption_annotations_to_json(std::span<const CaptionAnnotation> captions);
void save_caption_annotations(const std::filesystem::path& path, std::span<const CaptionAnnotation> captions);

GroundedCaption to_grounded_caption(const CaptionAnnotation& annotation);
CaptionAnnotation to_caption_annotation(const GroundedCaption& caption, std::string panel_image_ref);

/// {"0": "Goku", ...}
NameMap parse_name_map(const nlohmann::json& doc);
NameMap load_name_map(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& at);
nlohmann::json score_table_to_json(const ScoreTable& t);
ScoreTable score_table_from_json(const nlohmann::json& j, const std::string& at);

// ---------------------------------------------------------------------------
// Run directory

enum class Stage { Pending = 0, Detected, Ocr, Captioned, Grounded, Prose };

inline constexpr std::array<Stage, 5> kPipelineStages = {Stage::Detected, Stage::Ocr, Stage::Captioned,
                                                         Stage::Grounded, Stage::Prose};

std::string_view to_string(Stage stage) noexcept;

struct ArtifactRef {
    std::string path;  // relative to the run directory
    std::string sha256;

    friend bool operator==(const ArtifactRef&, const ArtifactRef&) = default;
};

struct PageEntry {
    std::string image;
    std::string image_sha256;
    Stage stage = Stage::Pending;  // last completed stage
    std::optional<std::string> error;
    std::map<std::string, ArtifactRef> artifacts;

    friend bool operator==(const PageEntry&, const PageEntry&) = default;
};

struct RunManifest {
    std::string tool_version;
    nlohmann::json config;
    std::vector<PageEntry> pages;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

nlohmann::json manifest_to_json(const RunManifest& m);
/// Rejects stage flags that are not a prefix of the pipeline order.
RunManifest manifest_from_json(const nlohmann::json& j);

/// Canonical two-space JSON with a trailing newline.
std::string canonical_dump(const nlohmann::json& j);

std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Owns one run directory; callers must not share an instance across
/// concurrent writers. Writes go through a temporary file and a rename.
class RunWriter {
public:
    explicit RunWriter(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
    std::optional<RunManifest> load_manifest() const;

    ArtifactRef write_artifact(const std::string& page_dir, const std::string& name, std::string_view content);
    void write_manifest(const RunManifest& manifest);

    /// Reads an artifact back and verifies its recorded hash.
    std::optional<std::string> read_artifact(const ArtifactRef& ref) const;

private:
    std::filesystem::path root_;
};

void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mangapipe

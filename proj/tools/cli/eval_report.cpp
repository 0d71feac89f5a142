#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/eval.hpp"
#include "mangapipe/prompts.hpp"

namespace mangapipe::cli {

using nlohmann::json;

namespace {

json prf_json(const PrfCounts& c) {
    return {{"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
}

json make_report(std::string_view task, json metrics, std::vector<std::string> warnings = {}) {
    json r = {{"version", kSchemaVersion}, {"task", task}, {"metrics", std::move(metrics)}};
    if (!warnings.empty()) r["warnings"] = warnings;
    return r;
}

std::pair<std::vector<PageAnnotation>, std::vector<PageAnnotation>> load_pair(const std::filesystem::path& pred,
                                                                               const std::filesystem::path& gt,
                                                                               std::vector<std::string>& warnings) {
    auto p = load_page_annotations(pred).items;
    auto g = load_page_annotations(gt).items;
    if (p.size() != g.size()) {
        throw InputError("prediction has " + std::to_string(p.size()) + " pages, ground truth " + std::to_string(g.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].image_ref != g[i].image_ref) {
            warnings.push_back("page " + std::to_string(i) + ": image '" + p[i].image_ref + "' vs '" + g[i].image_ref + "'");
        }
    }
    return {std::move(p), std::move(g)};
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, rows);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), rows);
    } else if (j.is_number_float()) {
        std::ostringstream s;
        s << std::setprecision(6) << std::fixed << j.get<double>();
        rows.emplace_back(prefix, s.str());
    } else if (j.is_string()) {
        rows.emplace_back(prefix, j.get<std::string>());
    } else {
        rows.emplace_back(prefix, j.dump());
    }
}

}  // namespace

std::optional<EvalKind> eval_kind_from_string(std::string_view name) {
    if (name == "detection") return EvalKind::Detection;
    if (name == "clustering") return EvalKind::Clustering;
    if (name == "association") return EvalKind::Association;
    if (name == "grounding") return EvalKind::Grounding;
    if (name == "judge") return EvalKind::Judge;
    return std::nullopt;
}

json eval_detection(const std::filesystem::path& pred, const std::filesystem::path& gt, double iou) {
    std::vector<std::string> warnings;
    const auto [p, g] = load_pair(pred, gt, warnings);
    std::map<NodeKind, PrfCounts> totals;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto r = detection_eval(p[i].as_nodes(), g[i].as_nodes(), iou);
        for (const auto& [kind, c] : r.per_kind) totals[kind] += c;
    }
    json metrics = json::object();
    for (NodeKind k : kAllNodeKinds) metrics[std::string(to_string(k))] = prf_json(totals[k]);
    metrics["iou"] = iou;
    metrics["pages"] = p.size();
    return make_report("detection", metrics, warnings);
}

json eval_clustering(const std::filesystem::path& pred, const std::filesystem::path& gt) {
    std::vector<std::string> warnings;
    const auto [p, g] = load_pair(pred, gt, warnings);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string at = "/pages/" + std::to_string(i) + "/cluster_labels";
        const std::size_t n = g[i].count(NodeKind::Character);
        if (n == 0) continue;
        if (g[i].cluster_labels.empty()) throw SchemaError(at, "ground truth lacks cluster labels");
        if (p[i].cluster_labels.empty()) throw SchemaError(at, "prediction lacks cluster labels");
        if (p[i].cluster_labels.size() != n) {
            throw InputError("page " + std::to_string(i) + ": prediction clusters " +
                             std::to_string(p[i].cluster_labels.size()) + " characters, ground truth " + std::to_string(n));
        }
        sum += ami(p[i].cluster_labels, g[i].cluster_labels);
        ++counted;
    }
    return make_report("clustering",
                       {{"ami", counted ? json(sum / static_cast<double>(counted)) : json(nullptr)}, {"pages", counted}},
                       warnings);
}

json eval_association(const std::filesystem::path& pred, const std::filesystem::path& gt) {
    std::vector<std::string> warnings;
    const auto [p, g] = load_pair(pred, gt, warnings);
    struct Acc {
        double sum = 0.0;
        std::size_t pages = 0;
    };
    std::map<std::string, Acc> acc;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p[i].scores) throw SchemaError("/pages/" + std::to_string(i) + "/scores", "prediction lacks scores");
        for (NodeKind k : {NodeKind::Character, NodeKind::Text, NodeKind::Tail}) {
            if (p[i].count(k) != g[i].count(k)) {
                throw InputError("page " + std::to_string(i) + ": " + std::string(to_string(k)) +
                                 " counts differ between prediction and ground truth");
            }
        }
        auto add = [&](const char* name, const Matrix& m, bool upper, const EdgeList& edges) {
            if (edges.empty()) return;
            acc[name].sum += association_ap(candidates_from_scores(m, upper), edges);
            ++acc[name].pages;
        };
        add("text_char", p[i].scores->text_char, false, g[i].edges.text_char);
        add("char_char", p[i].scores->char_char, true, g[i].edges.char_char);
        add("text_tail", p[i].scores->text_tail, false, g[i].edges.text_tail);
    }
    json metrics = json::object();
    for (const char* name : {"text_char", "char_char", "text_tail"}) {
        const Acc a = acc[name];
        metrics[name] = {{"ap", a.pages ? json(a.sum / static_cast<double>(a.pages)) : json(nullptr)}, {"pages", a.pages}};
    }
    return make_report("association", metrics, warnings);
}

json eval_grounding(const std::filesystem::path& pred, const std::filesystem::path& gt, double iou) {
    const auto p = load_caption_annotations(pred).items;
    const auto g = load_caption_annotations(gt).items;
    std::map<std::string, const CaptionAnnotation*> by_ref;
    for (const auto& c : g) {
        if (!by_ref.emplace(c.panel_image_ref, &c).second) {
            throw InputError("ground truth lists panel '" + c.panel_image_ref + "' twice");
        }
    }
    std::vector<std::string> warnings;
    std::set<std::string> seen;
    PrfCounts total;
    const GroundedCaption empty;
    for (const auto& c : p) {
        if (!seen.insert(c.panel_image_ref).second) throw InputError("prediction lists panel '" + c.panel_image_ref + "' twice");
        auto it = by_ref.find(c.panel_image_ref);
        if (it == by_ref.end()) {
            warnings.push_back("panel '" + c.panel_image_ref + "' has no ground truth; its boxes count as false positives");
            total += grounding_eval(to_grounded_caption(c), empty, iou).counts;
            continue;
        }
        total += grounding_eval(to_grounded_caption(c), to_grounded_caption(*it->second), iou).counts;
    }
    for (const auto& c : g) {
        if (seen.contains(c.panel_image_ref)) continue;
        warnings.push_back("panel '" + c.panel_image_ref + "' has no prediction; its boxes count as misses");
        total += grounding_eval(empty, to_grounded_caption(c), iou).counts;
    }
    json metrics = prf_json(total);
    metrics["iou"] = iou;
    metrics["captions"] = g.size();
    return make_report("grounding", metrics, warnings);
}

json eval_judge(const std::filesystem::path& verdicts) {
    const json doc = read_json_file(verdicts);
    if (!doc.is_object() || doc.value("version", 0) != kSchemaVersion) throw SchemaError("/version", "expected version 1");
    auto judges = doc.find("judges");
    if (judges == doc.end() || !judges->is_array()) throw SchemaError("/judges", "expected array");
    std::vector<JudgeScores> all;
    std::set<std::string> names;
    for (std::size_t i = 0; i < judges->size(); ++i) {
        const std::string at = "/judges/" + std::to_string(i);
        const json& j = (*judges)[i];
        if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) throw SchemaError(at + "/name", "expected string");
        JudgeScores s{j["name"].get<std::string>(), {}};
        if (!names.insert(s.judge).second) throw SchemaError(at + "/name", "duplicate judge");
        const bool has_scores = j.contains("scores"), has_raw = j.contains("responses");
        if (has_scores == has_raw) throw SchemaError(at, "give exactly one of scores or responses");
        const json& items = has_scores ? j["scores"] : j["responses"];
        if (!items.is_array()) throw SchemaError(at, "expected array");
        for (std::size_t k = 0; k < items.size(); ++k) {
            const std::string here = at + (has_scores ? "/scores/" : "/responses/") + std::to_string(k);
            if (has_scores) {
                if (!items[k].is_number()) throw SchemaError(here, "expected number");
                s.scores.push_back(items[k].get<double>());
            } else {
                if (!items[k].is_string()) throw SchemaError(here, "expected string");
                try {
                    s.scores.push_back(parse_judge_response(items[k].get<std::string>()).score);
                } catch (const JudgeParseError& e) {
                    throw SchemaError(here, e.what());
                }
            }
        }
        all.push_back(std::move(s));
    }
    const JudgeSummary summary = judge_summarize(all);
    json per = json::object();
    for (const auto& m : summary.per_judge) per[m.judge] = {{"mean", m.mean}, {"n", m.n}};
    return make_report("judge", {{"per_judge", per}, {"avg", summary.overall}, {"n", summary.n}});
}

std::string report_to_csv(const json& report) {
    std::vector<std::pair<std::string, std::string>> rows;
    flatten(report.at("metrics"), "", rows);
    std::string out = "metric,value\n";
    for (const auto& [k, v] : rows) {
        const bool quote = k.find_first_of(",\"") != std::string::npos;
        std::string key = k;
        if (quote) {
            std::string escaped;
            for (char c : k) escaped += c == '"' ? std::string("\"\"") : std::string(1, c);
            key = "\"" + escaped + "\"";
        }
        out += key + "," + v + "\n";
    }
    return out;
}

std::string report_to_table(const json& report) {
    std::vector<std::pair<std::string, std::string>> rows;
    flatten(report.at("metrics"), "", rows);
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.first.size());
    std::ostringstream out;
    out << report.at("task").get<std::string>() << "\n";
    for (const auto& [k, v] : rows) out << "  " << std::left << std::setw(static_cast<int>(width)) << k << "  " << v << "\n";
    if (report.contains("warnings")) {
        for (const auto& w : report["warnings"]) out << "warning: " << w.get<std::string>() << "\n";
    }
    return out.str();
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
    json report;
    try {
        if (!(opts.iou >= 0.0 && opts.iou <= 1.0)) throw InputError("--iou must lie in [0, 1]");
        switch (opts.kind) {
            case EvalKind::Detection: report = eval_detection(opts.pred, opts.gt, opts.iou); break;
            case EvalKind::Clustering: report = eval_clustering(opts.pred, opts.gt); break;
            case EvalKind::Association: report = eval_association(opts.pred, opts.gt); break;
            case EvalKind::Grounding: report = eval_grounding(opts.pred, opts.gt, opts.iou); break;
            case EvalKind::Judge: report = eval_judge(opts.pred); break;
        }
        if (opts.report) write_file_atomic(*opts.report, canonical_dump(report));
        if (opts.csv) write_file_atomic(*opts.csv, report_to_csv(report));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    out << (opts.json ? canonical_dump(report) : report_to_table(report));
    return kExitOk;
}

}  // namespace mangapipe::cli

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

using namespace mangapipe;
using namespace mangapipe::cli;

int main(int argc, char** argv) {
    CLI::App app{"mangapipe: manga page to prose pipeline and evaluation harness"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    // run
    RunOptions run;
    std::string style = "prose";
    std::optional<std::string> names;
    int timeout_ms = 30000;
    auto* run_cmd = app.add_subcommand("run", "Run the pipeline over a directory of page images");
    run_cmd->add_option("pages", run.pages_dir, "Directory of page images (sorted by filename)")->required();
    run_cmd->add_option("out", run.out_dir, "Run directory")->required();
    run_cmd->add_option("--infer-url", run.config.infer_url, "Inference server [env MANGAPIPE_INFER_URL]");
    run_cmd->add_option("--chat-url", run.config.chat_url, "Chat server [env MANGAPIPE_CHAT_URL]");
    run_cmd->add_option("--theta-char-char", run.config.thresholds.char_char, "Clustering threshold")->capture_default_str();
    run_cmd->add_option("--theta-text-char", run.config.thresholds.text_char, "Speaker threshold")->capture_default_str();
    run_cmd->add_option("--theta-text-tail", run.config.thresholds.text_tail, "Tail threshold")->capture_default_str();
    run_cmd->add_option("--ocr-iou", run.config.ocr_reconcile_iou, "OCR reconciliation IoU floor")->capture_default_str();
    run_cmd->add_option("--ground-iou", run.config.grounding_link_iou, "Grounding link IoU floor")->capture_default_str();
    run_cmd->add_option("--style", style, "Narrative style")
        ->check(CLI::IsMember({"prose", "screenplay", "storybook", "poem"}))
        ->capture_default_str();
    run_cmd->add_option("--names", names, "JSON map of cluster label to character name");
    run_cmd->add_option("--parallelism", run.config.parallelism, "Concurrent caption requests")->capture_default_str();
    run_cmd->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
    run_cmd->add_option("--attempts", run.attempts, "Attempts per request on transport failure")->capture_default_str();
    run_cmd->add_flag("--json", run.json, "Machine-readable summary");

    // eval
    EvalOptions ev;
    std::string eval_kind;
    std::optional<std::string> report, csv;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    eval_cmd->add_option("kind", eval_kind, "detection | clustering | association | grounding | judge")
        ->required()
        ->check(CLI::IsMember({"detection", "clustering", "association", "grounding", "judge"}));
    eval_cmd->add_option("pred", ev.pred, "Prediction file (verdicts file for judge)")->required();
    eval_cmd->add_option("gt", ev.gt, "Ground-truth file");
    eval_cmd->add_option("--iou", ev.iou, "IoU floor for a true positive")->capture_default_str();
    eval_cmd->add_option("--report", report, "Write the JSON report here");
    eval_cmd->add_option("--csv", csv, "Write a metric,value CSV here");
    eval_cmd->add_flag("--json", ev.json, "Print the JSON report instead of a table");

    // mock-serve
    MockServeOptions mock;
    auto* mock_cmd = app.add_subcommand("mock-serve", "Serve canned responses over the v1 protocol");
    mock_cmd->add_option("fixtures", mock.fixtures, "Fixture directory holding fixtures.json")->required();
    mock_cmd->add_option("--host", mock.host)->capture_default_str();
    mock_cmd->add_option("--port", mock.port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
    mock_cmd->add_option("--delay-ms", mock.delay_ms, "Latency added to every request")->check(CLI::NonNegativeNumber);
    mock_cmd->add_option("--fail-first", mock.fail_first, "Answer the first N requests with 503")->check(CLI::NonNegativeNumber);

    // decode
    DecodeOptions dec;
    std::string task = "detect";
    std::vector<int> dims;
    auto* dec_cmd = app.add_subcommand("decode", "Decode a model token sequence");
    dec_cmd->add_option("task", task, "detect | ocr | ground")->required()->check(CLI::IsMember({"detect", "ocr", "ground"}));
    dec_cmd->add_option("input", dec.input, "Token file, '-' for stdin")->required();
    dec_cmd->add_option("--dims", dims, "WIDTH HEIGHT, to also print pixel boxes")->expected(2);

    // fixtures-gen
    FixturesGenOptions gen;
    gen.root = ".";
    auto* gen_cmd = app.add_subcommand("fixtures-gen", "Regenerate the synthetic end-to-end fixtures and goldens");
    gen_cmd->add_option("--root", gen.root, "Repository root")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_default_logger(spdlog::stderr_color_mt("mangapipe"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (*run_cmd) {
        run.config.style = *narrative_style_from_string(style);
        if (names) run.config.name_map = *names;
        run.timeout = std::chrono::milliseconds(timeout_ms);
        apply_environment(run);
        return cmd_run(run, std::cout, std::cerr);
    }
    if (*eval_cmd) {
        ev.kind = *eval_kind_from_string(eval_kind);
        if (ev.kind != EvalKind::Judge && ev.gt.empty()) {
            std::cerr << "error: eval " << eval_kind << " needs a ground-truth file\n";
            return kExitUsage;
        }
        if (report) ev.report = *report;
        if (csv) ev.csv = *csv;
        return cmd_eval(ev, std::cout, std::cerr);
    }
    if (*mock_cmd) return cmd_mock_serve(mock, std::cout, std::cerr);
    if (*dec_cmd) {
        dec.task = *inference_task_from_string(task);
        if (!dims.empty()) {
            if (dims[0] < 1 || dims[1] < 1) {
                std::cerr << "error: --dims must be positive\n";
                return kExitUsage;
            }
            dec.dims = ImageDims{dims[0], dims[1]};
        }
        return cmd_decode(dec, std::cin, std::cout, std::cerr);
    }
    if (*gen_cmd) return cmd_fixtures_gen(gen, std::cout, std::cerr);
    return kExitUsage;
}

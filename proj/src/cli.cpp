#include "spinemorph/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <set>

#include <CLI11.hpp>

#include "parallel.hpp"
#include "spinemorph/error.hpp"
#include "spinemorph/evaluation.hpp"
#include "spinemorph/frames.hpp"
#include "spinemorph/morphometry.hpp"
#include "spinemorph/synthetic.hpp"
#include "text_util.hpp"

namespace spinemorph {

namespace fs = std::filesystem;

namespace {

struct MeasureConfig {
    std::vector<std::string> manifests;
    std::string out;
    double max_angle = 45.0;
    bool fallback_single = false;
    bool csv = false;
    unsigned jobs = 1;
};

struct GenerateConfig {
    std::string out;
    std::size_t count = 50;
    std::uint64_t seed = 7;
    double resolution = kDefaultResolution;
    double lordosis_min = 40.0;
    double lordosis_max = 74.0;
    std::size_t vertebrae = 5;
    unsigned jobs = 1;
};

struct EvaluateConfig {
    std::string pred;
    std::string truth;
    std::string out;
};

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "cannot create output directory " + dir.string());
}

int cmd_measure(const MeasureConfig& cfg, bool verbose, std::ostream& err) {
    if (!(cfg.max_angle > 0.0 && cfg.max_angle < 90.0))
        throw Error(ErrorCode::kInvalidArgument, "--max-angle must lie in (0, 90)");
    // Validate every manifest before doing any work.
    std::vector<SpineManifest> manifests;
    std::set<std::string> ids;
    for (const auto& m : cfg.manifests) {
        manifests.push_back(read_manifest(m));
        for (const auto& e : manifests.back().entries)
            if (!fs::exists(e.mesh_path))
                throw Error(ErrorCode::kFileNotFound, e.mesh_path.string() + " (label " + e.label + ", manifest " + m + ")");
        if (!ids.insert(manifests.back().spine_id).second)
            throw Error(ErrorCode::kInvalidManifest, "duplicate spine_id '" + manifests.back().spine_id + "' in " + m);
    }
    const fs::path out(cfg.out);
    ensure_directory(out);

    MeasureOptions options;
    options.max_angle_deg = cfg.max_angle;
    options.fallback_single = cfg.fallback_single;

    std::vector<std::size_t> failures(cfg.manifests.size(), 0);
    std::mutex log_mutex;
    detail::parallel_for(cfg.manifests.size(), cfg.jobs, [&](std::size_t i) {
        const SpineReport report = measure_manifest(cfg.manifests[i], options);
        const fs::path stem = out / report.spine_id;
        detail::write_file_atomic(stem.string() + ".report.json", report_to_json(report));
        detail::write_file_atomic(stem.string() + ".timings.json", timings_to_json(report));
        if (cfg.csv) detail::write_file_atomic(stem.string() + ".csv", report_to_csv(report));
        failures[i] = report.failures();

        std::lock_guard lock(log_mutex);
        for (const auto& v : report.vertebrae) {
            if (!v.error.empty()) err << report.spine_id << "/" << v.label << ": " << v.error << "\n";
            else if (verbose)
                for (const auto& w : v.warnings) err << report.spine_id << "/" << v.label << ": warning: " << w << "\n";
        }
        if (verbose)
            err << report.spine_id << ": " << report.vertebrae.size() - failures[i] << "/" << report.vertebrae.size()
                << " vertebrae measured\n";
    });
    const bool partial = std::any_of(failures.begin(), failures.end(), [](std::size_t f) { return f > 0; });
    return partial ? 2 : 0;
}

int cmd_generate(const GenerateConfig& cfg, bool verbose, std::ostream& err) {
    if (cfg.lordosis_min > cfg.lordosis_max)
        throw Error(ErrorCode::kInvalidArgument, "--lordosis-min exceeds --lordosis-max");
    DatasetOptions options;
    options.count = cfg.count;
    options.seed = cfg.seed;
    options.resolution = cfg.resolution;
    options.vertebra_count = cfg.vertebrae;
    options.ranges.lordosis_deg = {cfg.lordosis_min, cfg.lordosis_max};
    options.jobs = cfg.jobs;
    const auto start = std::chrono::steady_clock::now();
    const DatasetManifest dataset = generate_dataset(options, cfg.out);
    if (verbose) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        err << "generated " << dataset.spine_ids.size() << " spines in " << cfg.out << " (" << elapsed.count()
            << " s)\n";
    }
    return 0;
}

int cmd_evaluate(const EvaluateConfig& cfg, std::ostream& out) {
    const auto predictions = load_predictions(cfg.pred);
    const AnnotationTable annotations = read_annotations(cfg.truth);
    const EvaluationReport report = evaluate(predictions, annotations);
    const fs::path dir(cfg.out);
    ensure_directory(dir);
    detail::write_file_atomic(dir / "evaluation.json", evaluation_to_json(report));
    detail::write_file_atomic(dir / "evaluation.csv", evaluation_to_csv(report));
    out << evaluation_summary(report);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Vertebral body morphometry on 3D spine meshes"};
    app.name("spinemorph");
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Progress and warnings on stderr");

    MeasureConfig measure;
    auto* m = app.add_subcommand("measure", "Measure every vertebra listed in one or more manifests");
    m->add_option("--manifest", measure.manifests, "Spine manifest (JSON)")->required()->expected(1, -1);
    m->add_option("--out", measure.out, "Output directory")->required();
    m->add_option("--max-angle", measure.max_angle, "Endplate normal threshold in degrees")->capture_default_str();
    m->add_flag("--fallback-single", measure.fallback_single, "Use +S as up-vector for spines with fewer than 3 vertebrae");
    m->add_flag("--csv", measure.csv, "Also write <spine_id>.csv");
    m->add_option("--jobs", measure.jobs, "Spines measured concurrently")->check(CLI::PositiveNumber);

    GenerateConfig generate;
    auto* g = app.add_subcommand("generate", "Write a synthetic lumbar spine dataset");
    g->add_option("--out", generate.out, "Output directory")->required();
    g->add_option("--count", generate.count, "Number of spines")->capture_default_str();
    g->add_option("--seed", generate.seed, "Dataset seed")->capture_default_str();
    g->add_option("--resolution", generate.resolution, "Vertices per mm^2")->capture_default_str();
    g->add_option("--lordosis-min", generate.lordosis_min, "Degrees")->capture_default_str();
    g->add_option("--lordosis-max", generate.lordosis_max, "Degrees")->capture_default_str();
    g->add_option("--vertebrae", generate.vertebrae, "Vertebrae per spine")->capture_default_str();
    g->add_option("--jobs", generate.jobs, "Spines generated concurrently")->check(CLI::PositiveNumber);

    EvaluateConfig evaluate_cfg;
    auto* e = app.add_subcommand("evaluate", "Compare measurement reports against annotations or ground truth");
    e->add_option("--pred", evaluate_cfg.pred, "A *.report.json file or a directory of them")->required();
    e->add_option("--truth", evaluate_cfg.truth, "Annotation or ground-truth CSV")->required();
    e->add_option("--out", evaluate_cfg.out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (m->parsed()) return cmd_measure(measure, verbose, err);
        if (g->parsed()) return cmd_generate(generate, verbose, err);
        return cmd_evaluate(evaluate_cfg, out);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 1;
    }
}

}  // namespace spinemorph

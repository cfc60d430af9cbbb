#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsn/common.hpp"
#include "dsn/config.hpp"
#include "dsn/image.hpp"
#include "dsn/metrics.hpp"
#include "dsn/model.hpp"
#include "dsn/protocols.hpp"
#include "dsn/superpixel.hpp"
#include "dsn/training.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;  // key=value overrides
    std::string seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key = value configuration file");
    cmd->add_option("--set", opts.sets, "override a configuration key (key=value)");
    cmd->add_option("--seed", opts.seed, "top-level seed");
}

// Precedence: flag > file > DSNIQA_SEED > built-in defaults.
dsn::RunConfig resolve_config(const CommonOpts& opts) {
    dsn::RunConfig merged;
    if (const char* env = std::getenv("DSNIQA_SEED")) merged.set("seed", env);
    if (!opts.config_path.empty())
        dsn::merge_into(merged, dsn::load_config_file(opts.config_path));
    for (const std::string& kv : opts.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            dsn::raise(dsn::Errc::BadConfig, "--set expects key=value, got: " + kv);
        merged.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opts.seed.empty()) merged.set("seed", opts.seed);
    return merged;
}

bool parse_number(const std::string& field, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(field, &used);
        return used == field.size();
    } catch (const std::exception&) {
        return false;
    }
}

// Accepts either a bare column of numbers or a headed CSV; with a header the
// `prediction` column wins over `score` so eval outputs feed straight back in.
std::vector<double> read_score_column(const std::string& path) {
    std::ifstream is(path);
    if (!is) dsn::raise(dsn::Errc::IoError, "cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(dsn::split_csv_line(line));
    }
    if (rows.empty()) dsn::raise(dsn::Errc::EmptyManifest, "no rows in " + path);
    std::size_t column = rows[0].size() - 1;
    std::size_t first_row = 0;
    double probe = 0.0;
    const bool headed = !parse_number(rows[0].back(), probe);
    if (headed) {
        first_row = 1;
        bool found = false;
        for (const std::string name : {"prediction", "score"}) {
            for (std::size_t c = 0; c < rows[0].size(); ++c) {
                if (rows[0][c] == name) {
                    column = c;
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        if (!found)
            dsn::raise(dsn::Errc::MissingColumn, "no score or prediction column in " + path);
    }
    std::vector<double> values;
    for (std::size_t r = first_row; r < rows.size(); ++r) {
        if (column >= rows[r].size())
            dsn::raise(dsn::Errc::UnparsableScore, "short row in " + path);
        double v = 0.0;
        if (!parse_number(rows[r][column], v))
            dsn::raise(dsn::Errc::UnparsableScore, "not a number in " + path + ": " + rows[r][column]);
        values.push_back(v);
    }
    return values;
}

std::string require(const dsn::RunConfig& config, const std::string& key) {
    const std::string v = config.get_or(key, "");
    if (v.empty()) dsn::raise(dsn::Errc::BadConfig, "key '" + key + "' is required");
    return v;
}

int cmd_train(const CommonOpts& common, const std::string& out_dir) {
    dsn::RunConfig rc = resolve_config(common);
    const dsn::DatasetManifest manifest =
        dsn::load_manifest(require(rc, "experiment.train_manifest"));
    const dsn::SplitSpec spec = dsn::make_split(rc);
    auto [train_m, test_m] = dsn::split(manifest, spec);

    dsn::TrainResult res =
        dsn::train_on_manifest(train_m, dsn::make_train(rc), dsn::make_pipeline(rc));

    dsn::write_run_header(out_dir, rc);
    dsn::save_checkpoint(res.bundle, (fs::path(out_dir) / "checkpoint.ckpt").string());
    dsn::write_training_log((fs::path(out_dir) / "training_log.csv").string(), res.log);
    dsn::write_manifest_csv((fs::path(out_dir) / "train_split.csv").string(), train_m);
    dsn::write_manifest_csv((fs::path(out_dir) / "test_split.csv").string(), test_m);

    std::cout << "trained images=" << train_m.entries.size() << " epochs=" << res.log.size()
              << " final_loss=" << dsn::format_real(res.log.back().mean_loss) << "\n";
    std::cout << "outputs in " << out_dir << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint,
             const std::string& out_dir) {
    dsn::RunConfig rc = resolve_config(common);
    const dsn::DatasetManifest manifest =
        dsn::load_manifest(require(rc, "experiment.train_manifest"));
    dsn::ModelBundle bundle = dsn::load_checkpoint(checkpoint);

    dsn::EvalOutcome out = dsn::evaluate_manifest(bundle, manifest, dsn::seed_of(rc), "none", 0);

    dsn::write_run_header(out_dir, rc);
    const std::string scores_path = (fs::path(out_dir) / "scores.csv").string();
    std::ofstream scores(scores_path);
    if (!scores) dsn::raise(dsn::Errc::IoError, "cannot open for writing: " + scores_path);
    scores << "image_path,score,prediction\n";
    for (std::size_t i = 0; i < out.paths.size(); ++i)
        scores << out.paths[i] << ',' << dsn::format_real(out.targets[i]) << ','
               << dsn::format_real(out.predictions[i]) << '\n';

    const std::string report_path = (fs::path(out_dir) / "eval.txt").string();
    std::ofstream report(report_path);
    if (!report) dsn::raise(dsn::Errc::IoError, "cannot open for writing: " + report_path);
    report << "srcc=" << dsn::format_real(out.report.srcc)
           << "\nplcc=" << dsn::format_real(out.report.plcc) << "\nn=" << out.report.n
           << "\nplcc_method=" << out.report.plcc_method << "\nseed=" << out.report.seed << "\n";

    std::cout << "srcc=" << dsn::format_real(out.report.srcc)
              << " plcc=" << dsn::format_real(out.report.plcc) << " n=" << out.report.n << "\n";
    return 0;
}

int cmd_segment(const CommonOpts& common, const std::string& image_path,
                const std::string& checkpoint, const std::string& labels_path,
                const std::string& probmap_path) {
    if (labels_path.empty() && probmap_path.empty())
        dsn::raise(dsn::Errc::BadConfig, "segment needs --labels and/or --probmap");
    dsn::RunConfig rc = resolve_config(common);
    const dsn::SegmenterConfig config = dsn::make_pipeline(rc).segmenter;

    dsn::CnnSegmenterParams params;
    dsn::CnnSegmenterParams* params_ptr = nullptr;
    dsn::ModelBundle bundle;
    if (config.backend == dsn::SegmenterBackend::Cnn) {
        if (checkpoint.empty())
            dsn::raise(dsn::Errc::BackendParamsMissing,
                       "cnn backend needs --checkpoint for segmenter parameters");
        bundle = dsn::load_checkpoint(checkpoint);
        if (!bundle.config.uses_cnn_segmenter())
            dsn::raise(dsn::Errc::BackendParamsMissing,
                       "checkpoint holds no cnn segmenter parameters");
        params_ptr = &bundle.segmenter;
    }

    const dsn::ImageSample image = dsn::decode_image(image_path);
    const dsn::SuperpixelProbMap map = dsn::segment(image, config, params_ptr);
    if (!labels_path.empty())
        dsn::write_label_png(labels_path, dsn::to_label_map(map), map.height(), map.width());
    if (!probmap_path.empty()) dsn::write_probmap_blob(probmap_path, map);

    std::cout << "segmented " << image_path << " n=" << map.n_superpixels << " size=" << map.width()
              << "x" << map.height() << "\n";
    return 0;
}

int cmd_metrics(const std::string& pred_path, const std::string& gt_path) {
    const std::vector<double> pred = read_score_column(pred_path);
    const std::vector<double> gt = read_score_column(gt_path);
    const double s = dsn::srcc(pred, gt);
    const double p = dsn::plcc(pred, gt);
    std::cout << "srcc=" << dsn::format_real(s) << " plcc=" << dsn::format_real(p)
              << " n=" << pred.size() << "\n";
    return 0;
}

int cmd_experiment(const CommonOpts& common, const std::string& out_dir) {
    dsn::RunConfig rc = resolve_config(common);
    dsn::ExperimentConfig ec = dsn::make_experiment(rc);
    if (ec.train_manifest.empty())
        dsn::raise(dsn::Errc::BadConfig, "key 'experiment.train_manifest' is required");

    const dsn::ProtocolReport report =
        dsn::run_experiment(ec, dsn::make_train(rc), dsn::make_pipeline(rc));
    dsn::write_run_header(out_dir, rc);
    dsn::write_report(report, out_dir);

    for (const dsn::ProtocolRecord& r : report.records) {
        if (r.repeat_index >= 0 && report.records.size() > 8) continue;  // keep stdout short
        std::cout << "condition=" << r.condition << " repeat="
                  << (r.repeat_index < 0 ? std::string("median") : std::to_string(r.repeat_index))
                  << " srcc=" << dsn::format_real(r.srcc) << " plcc=" << dsn::format_real(r.plcc)
                  << "\n";
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"superpixel-guided blind image quality assessment"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, seg_opts, exp_opts;
    std::string out_dir = "dsniqa-out";
    std::string eval_out = "dsniqa-out", eval_checkpoint;
    std::string seg_image, seg_checkpoint, seg_labels, seg_probmap, seg_backend, seg_n;
    std::string pred_path, gt_path;
    std::string exp_out = "dsniqa-out", exp_kind, exp_variant, exp_train, exp_repeats;
    std::vector<std::string> exp_tests;

    CLI::App* train = app.add_subcommand("train", "split a manifest and train a model");
    add_common(train, train_opts);
    std::string train_manifest;
    train->add_option("--manifest", train_manifest, "training manifest CSV");
    train->add_option("--out", out_dir, "output directory");

    CLI::App* eval = app.add_subcommand("eval", "score a manifest with a checkpoint");
    add_common(eval, eval_opts);
    std::string eval_manifest;
    eval->add_option("--manifest", eval_manifest, "manifest CSV to score");
    eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval->add_option("--out", eval_out, "output directory");

    CLI::App* segment = app.add_subcommand("segment", "superpixel-segment one image");
    add_common(segment, seg_opts);
    segment->add_option("--image", seg_image, "input image")->required();
    segment->add_option("--backend", seg_backend, "slic or cnn");
    segment->add_option("--n", seg_n, "number of superpixels");
    segment->add_option("--checkpoint", seg_checkpoint, "checkpoint (cnn backend)");
    segment->add_option("--labels", seg_labels, "label visualization PNG to write");
    segment->add_option("--probmap", seg_probmap, "probability map blob to write");

    CLI::App* metrics = app.add_subcommand("metrics", "srcc/plcc of two score columns");
    metrics->add_option("--pred", pred_path, "predictions CSV")->required();
    metrics->add_option("--gt", gt_path, "ground-truth CSV")->required();

    CLI::App* experiment = app.add_subcommand("experiment", "run an experimental protocol");
    add_common(experiment, exp_opts);
    experiment->add_option("--kind", exp_kind, "individual|cross-db|per-distortion|ablation|crop-size");
    experiment->add_option("--variant", exp_variant, "ablation variant");
    experiment->add_option("--train-manifest", exp_train, "training manifest CSV");
    experiment->add_option("--test-manifest", exp_tests, "test manifest CSV (repeatable)");
    experiment->add_option("--repeats", exp_repeats, "number of repeats");
    experiment->add_option("--out", exp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) {
            if (!train_manifest.empty())
                train_opts.sets.push_back("experiment.train_manifest=" + train_manifest);
            return cmd_train(train_opts, out_dir);
        }
        if (eval->parsed()) {
            if (!eval_manifest.empty())
                eval_opts.sets.push_back("experiment.train_manifest=" + eval_manifest);
            return cmd_eval(eval_opts, eval_checkpoint, eval_out);
        }
        if (segment->parsed()) {
            if (!seg_backend.empty()) seg_opts.sets.push_back("segmenter.backend=" + seg_backend);
            if (!seg_n.empty()) seg_opts.sets.push_back("segmenter.n_superpixels=" + seg_n);
            return cmd_segment(seg_opts, seg_image, seg_checkpoint, seg_labels, seg_probmap);
        }
        if (metrics->parsed()) return cmd_metrics(pred_path, gt_path);
        if (experiment->parsed()) {
            if (!exp_kind.empty()) exp_opts.sets.push_back("experiment.kind=" + exp_kind);
            if (!exp_variant.empty())
                exp_opts.sets.push_back("experiment.variant=" + exp_variant);
            if (!exp_train.empty())
                exp_opts.sets.push_back("experiment.train_manifest=" + exp_train);
            if (!exp_tests.empty()) {
                std::string joined;
                for (const std::string& t : exp_tests) {
                    if (!joined.empty()) joined += ',';
                    joined += t;
                }
                exp_opts.sets.push_back("experiment.test_manifests=" + joined);
            }
            if (!exp_repeats.empty())
                exp_opts.sets.push_back("experiment.repeats=" + exp_repeats);
            return cmd_experiment(exp_opts, exp_out);
        }
        dsn::raise(dsn::Errc::UnknownSubcommand, "no subcommand selected");
    } catch (const dsn::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return err.code() == dsn::Errc::IoError ? 2 : 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}

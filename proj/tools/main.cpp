#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "octarec/errors.hpp"
#include "octarec/parallel.hpp"
#include "pipeline.hpp"

using namespace octarec;
using namespace octarec::cli;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitCheckpointMismatch = 4;
constexpr int kExitUndefinedMetric = 5;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"OCTA depth estimation and 3D vessel reconstruction pipeline"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string config_file;
    app.add_option("--config", config_file, "JSON pipeline config (flags override it)");
    app.add_option("--out", common.out, "output directory (stem prefix for reconstruct)");
    app.add_option("--seed", common.seed, "base random seed");
    app.add_option("--threads", common.threads, "worker thread cap");
    app.add_flag("--verbose", common.verbose, "log progress to stderr");

    // phantom
    auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic vessel dataset");
    int phantom_n = -1;
    int ph_canvas = -1, ph_levels = -1;
    double ph_noise = -1.0;
    sc_phantom->add_option("--n", phantom_n, "number of samples");
    sc_phantom->add_option("--canvas", ph_canvas, "canvas edge in pixels");
    sc_phantom->add_option("--depth-levels", ph_levels, "bifurcation generations");
    sc_phantom->add_option("--noise", ph_noise, "angiogram noise sigma");

    // train
    auto* sc_train = app.add_subcommand("train", "train the depth/segmentation network");
    std::string data_dir;
    int tr_steps = -1, tr_batch = -1, tr_levels = -1, tr_width = -1;
    double tr_lr = -1.0;
    sc_train->add_option("--data", data_dir, "dataset directory")->required();
    sc_train->add_option("--steps", tr_steps, "optimizer steps");
    sc_train->add_option("--batch", tr_batch, "batch size");
    sc_train->add_option("--lr", tr_lr, "learning rate");
    sc_train->add_option("--levels", tr_levels, "network levels");
    sc_train->add_option("--base-width", tr_width, "network base width");

    // predict
    auto* sc_predict = app.add_subcommand("predict", "run inference on an angiogram");
    std::string ckpt, angio;
    int pr_levels = -1, pr_width = -1;
    sc_predict->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    sc_predict->add_option("--input", angio, "angiogram PGM")->required();
    sc_predict->add_option("--levels", pr_levels, "expected network levels");
    sc_predict->add_option("--base-width", pr_width, "expected network base width");

    // reconstruct
    auto* sc_recon = app.add_subcommand("reconstruct", "lift a segmentation to 3D tubes");
    std::string seg_path, depth_path, stem = "recon";
    double rc_sz = -1.0;
    int rc_sides = -1;
    sc_recon->add_option("--seg", seg_path, "segmentation PGM")->required();
    sc_recon->add_option("--depth", depth_path, "depth PFM")->required();
    sc_recon->add_option("--stem", stem, "output file stem");
    sc_recon->add_option("--sz", rc_sz, "mm per unit depth");
    sc_recon->add_option("--tube-sides", rc_sides, "cross-section side count");

    // eval-depth
    auto* sc_evald = app.add_subcommand("eval-depth", "depth metric report");
    std::string ed_pred, ed_gt, ed_mask;
    sc_evald->add_option("--pred", ed_pred, "predicted depth PFM")->required();
    sc_evald->add_option("--gt", ed_gt, "ground-truth depth PFM")->required();
    sc_evald->add_option("--mask", ed_mask, "vessel mask PGM (vessel-only evaluation)");

    // eval-recon
    auto* sc_evalr = app.add_subcommand("eval-recon", "point-cloud metric report");
    std::string er_pred, er_gt;
    sc_evalr->add_option("--pred", er_pred, "reconstructed cloud PLY")->required();
    sc_evalr->add_option("--gt", er_gt, "ground-truth cloud PLY")->required();

    for (auto* sc : app.get_subcommands(nullptr)) sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (!config_file.empty()) common.config_path = config_file;
        if (common.threads > 0) set_max_threads(common.threads);

        PipelineConfig cfg;
        if (common.config_path) cfg = load_config(*common.config_path);

        // flags override the config file
        if (ph_canvas > 0) cfg.phantom.canvas = ph_canvas;
        if (ph_levels > 0) cfg.phantom.depth_levels = ph_levels;
        if (ph_noise >= 0.0) cfg.phantom.noise_sigma = ph_noise;
        if (tr_steps > 0) cfg.train.steps = tr_steps;
        if (tr_batch > 0) cfg.train.batch_size = tr_batch;
        if (tr_lr > 0.0) cfg.train.lr = tr_lr;
        if (tr_levels > 0) cfg.network.levels = tr_levels;
        if (tr_width > 0) cfg.network.base_width = tr_width;
        if (pr_levels > 0) cfg.network.levels = pr_levels;
        if (pr_width > 0) cfg.network.base_width = pr_width;
        if (rc_sz > 0.0) cfg.recon.sz = rc_sz;
        if (rc_sides > 0) cfg.recon.tube_sides = rc_sides;

        if (sc_phantom->parsed()) {
            if (phantom_n < 0) phantom_n = cfg.phantom_n;
            return cmd_phantom(common, cfg, phantom_n);
        }
        if (sc_train->parsed()) return cmd_train(common, cfg, data_dir);
        if (sc_predict->parsed()) {
            bool pinned = pr_levels > 0 || pr_width > 0;
            if (!pinned && common.config_path) {
                std::ifstream in(*common.config_path);
                std::string bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
                pinned = bytes.find("\"network\"") != std::string::npos;
            }
            return cmd_predict(common, cfg, ckpt, angio, pinned);
        }
        if (sc_recon->parsed()) return cmd_reconstruct(common, cfg, seg_path, depth_path, stem);
        if (sc_evald->parsed())
            return cmd_eval_depth(common, cfg, ed_pred, ed_gt,
                                  ed_mask.empty()
                                      ? std::nullopt
                                      : std::optional<std::filesystem::path>(ed_mask));
        if (sc_evalr->parsed()) return cmd_eval_recon(common, cfg, er_pred, er_gt);
        return kExitConfig;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const checkpoint_mismatch_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpointMismatch;
    } catch (const undefined_metric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUndefinedMetric;
    } catch (const missing_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

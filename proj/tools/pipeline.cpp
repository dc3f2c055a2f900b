#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "octarec/errors.hpp"
#include "octarec/parallel.hpp"
#include "octarec/pnm_io.hpp"

namespace octarec::cli {

using nlohmann::json;

namespace {

class StageTimer {
public:
    explicit StageTimer(RunReport& report) : report_(report) {}

    template <typename F>
    auto run(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            report_.timings_s[stage] = seconds_since(t0);
        } else {
            auto result = f();
            report_.timings_s[stage] = seconds_since(t0);
            return result;
        }
    }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    RunReport& report_;
};

void reject_unknown(const json& j, const std::string& section,
                    const std::vector<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw config_error("config: unknown key \"" + key + "\" in " + section);
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string sample_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom_%04d", index);
    return buf;
}

Tensor4f image_to_tensor(const Image2D& img) {
    Tensor4f t(1, 1, img.height, img.width);
    std::copy(img.data.begin(), img.data.end(), t.v.begin());
    return t;
}

Image2D tensor_to_image(const Tensor4f& t, int item) {
    Image2D img(t.w, t.h);
    std::copy_n(t.plane(item, 0), img.size(), img.data.begin());
    return img;
}

struct Dataset {
    std::vector<std::string> stems;
    std::vector<Image2D> angiograms;
    std::vector<Image2D> depths;
    std::vector<Image2D> segs;
};

Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw missing_input_error("dataset directory not found: " + dir.string());
    Dataset ds;
    std::vector<std::filesystem::path> angios;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 10 && name.ends_with("_angio.pgm")) angios.push_back(entry.path());
    }
    std::sort(angios.begin(), angios.end());
    for (const auto& angio_path : angios) {
        std::string stem = angio_path.filename().string();
        stem.resize(stem.size() - std::string("_angio.pgm").size());
        const auto depth_path = dir / (stem + "_depth.pfm");
        const auto seg_path = dir / (stem + "_seg.pgm");
        if (!std::filesystem::exists(depth_path) || !std::filesystem::exists(seg_path))
            throw missing_input_error("incomplete sample: " + stem);
        ds.stems.push_back(stem);
        ds.angiograms.push_back(load_pgm(angio_path));
        ds.depths.push_back(load_pfm(depth_path));
        ds.segs.push_back(load_pgm(seg_path));
    }
    if (ds.stems.empty())
        throw missing_input_error("no *_angio.pgm samples in " + dir.string());
    return ds;
}

} // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    if (!std::filesystem::exists(path))
        throw missing_input_error("config file not found: " + path.string());
    std::ifstream in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    reject_unknown(j, "root", {"phantom", "network", "train", "loss", "recon", "eval"});
    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        reject_unknown(p, "phantom",
                       {"n", "depth_levels", "branch_prob", "radius_root", "radius_decay",
                        "angle_jitter", "canvas", "n_roots", "z_base", "z_step", "z_amplitude",
                        "noise_sigma", "mm_per_px", "mm_per_depth"});
        read_field(p, "n", cfg.phantom_n);
        read_field(p, "depth_levels", cfg.phantom.depth_levels);
        read_field(p, "branch_prob", cfg.phantom.branch_prob);
        read_field(p, "radius_root", cfg.phantom.radius_root);
        read_field(p, "radius_decay", cfg.phantom.radius_decay);
        read_field(p, "angle_jitter", cfg.phantom.angle_jitter);
        read_field(p, "canvas", cfg.phantom.canvas);
        read_field(p, "n_roots", cfg.phantom.n_roots);
        read_field(p, "z_base", cfg.phantom.z_base);
        read_field(p, "z_step", cfg.phantom.z_step);
        read_field(p, "z_amplitude", cfg.phantom.z_amplitude);
        read_field(p, "noise_sigma", cfg.phantom.noise_sigma);
        read_field(p, "mm_per_px", cfg.phantom.mm_per_px);
        read_field(p, "mm_per_depth", cfg.phantom.mm_per_depth);
    }
    if (j.contains("network")) {
        const json& n = j["network"];
        reject_unknown(n, "network", {"levels", "base_width"});
        read_field(n, "levels", cfg.network.levels);
        read_field(n, "base_width", cfg.network.base_width);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t, "train", {"steps", "batch_size", "lr", "train_fraction"});
        read_field(t, "steps", cfg.train.steps);
        read_field(t, "batch_size", cfg.train.batch_size);
        read_field(t, "lr", cfg.train.lr);
        read_field(t, "train_fraction", cfg.train.train_fraction);
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        reject_unknown(l, "loss", {"lambda_vessel", "lambda_background"});
        read_field(l, "lambda_vessel", cfg.loss.lambda_vessel);
        read_field(l, "lambda_background", cfg.loss.lambda_background);
    }
    if (j.contains("recon")) {
        const json& r = j["recon"];
        reject_unknown(r, "recon", {"sx", "sy", "sz", "resample_step_px", "tube_sides",
                                    "cap_ends", "min_spur_len"});
        read_field(r, "sx", cfg.recon.sx);
        read_field(r, "sy", cfg.recon.sy);
        read_field(r, "sz", cfg.recon.sz);
        read_field(r, "resample_step_px", cfg.recon.resample_step_px);
        read_field(r, "tube_sides", cfg.recon.tube_sides);
        read_field(r, "cap_ends", cfg.recon.cap_ends);
        read_field(r, "min_spur_len", cfg.recon.min_spur_len);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        reject_unknown(e, "eval", {"epsilon"});
        read_field(e, "epsilon", cfg.eval.eval_epsilon);
    }
    return cfg;
}

std::string serialize_config(const PipelineConfig& cfg) {
    json j;
    j["phantom"] = {{"n", cfg.phantom_n},
                    {"depth_levels", cfg.phantom.depth_levels},
                    {"branch_prob", cfg.phantom.branch_prob},
                    {"radius_root", cfg.phantom.radius_root},
                    {"radius_decay", cfg.phantom.radius_decay},
                    {"angle_jitter", cfg.phantom.angle_jitter},
                    {"canvas", cfg.phantom.canvas},
                    {"n_roots", cfg.phantom.n_roots},
                    {"z_base", cfg.phantom.z_base},
                    {"z_step", cfg.phantom.z_step},
                    {"z_amplitude", cfg.phantom.z_amplitude},
                    {"noise_sigma", cfg.phantom.noise_sigma},
                    {"mm_per_px", cfg.phantom.mm_per_px},
                    {"mm_per_depth", cfg.phantom.mm_per_depth}};
    j["network"] = {{"levels", cfg.network.levels}, {"base_width", cfg.network.base_width}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},
                  {"train_fraction", cfg.train.train_fraction}};
    j["loss"] = {{"lambda_vessel", cfg.loss.lambda_vessel},
                 {"lambda_background", cfg.loss.lambda_background}};
    j["recon"] = {{"sx", cfg.recon.sx},
                  {"sy", cfg.recon.sy},
                  {"sz", cfg.recon.sz},
                  {"resample_step_px", cfg.recon.resample_step_px},
                  {"tube_sides", cfg.recon.tube_sides},
                  {"cap_ends", cfg.recon.cap_ends},
                  {"min_spur_len", cfg.recon.min_spur_len}};
    j["eval"] = {{"epsilon", cfg.eval.eval_epsilon}};
    return j.dump(2);
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t config_hash(const std::optional<std::filesystem::path>& config_path,
                          const PipelineConfig& cfg) {
    if (config_path) {
        std::ifstream in(*config_path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        return fnv1a(bytes);
    }
    return fnv1a(serialize_config(cfg));
}

void RunReport::write(const std::filesystem::path& path) const {
    json j;
    j["command"] = command;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hex;
    j["timings_s"] = timings_s;
    j["outputs"] = outputs;
    if (!metrics_json.empty()) j["metrics"] = json::parse(metrics_json);
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << "\n";
}

int cmd_phantom(const CommonOptions& common, const PipelineConfig& cfg, int n) {
    if (n <= 0) throw config_error("phantom: sample count must be positive");
    std::filesystem::create_directories(common.out);
    RunReport report;
    report.command = "phantom";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    timer.run("generate", [&] {
        for (int i = 0; i < n; ++i) {
            const auto scene = phantom::generate_tree(common.seed + i, cfg.phantom);
            const auto sample = phantom::rasterize(scene, cfg.phantom.noise_sigma);
            const std::string stem = sample_stem(i);
            const auto base = common.out / stem;
            save_pgm(sample.angiogram, base.string() + "_angio.pgm");
            save_pfm(sample.depth_gt.image, base.string() + "_depth.pfm");
            save_mask_pgm(sample.seg_gt, base.string() + "_seg.pgm");
            recon::export_ply_cloud(sample.centerline_gt, base.string() + "_centerline.ply");
            json meta;
            meta["seed"] = scene.seed;
            meta["canvas"] = scene.canvas;
            meta["mm_per_px"] = scene.mm_per_px;
            meta["mm_per_depth"] = scene.mm_per_depth;
            meta["branches"] = scene.branches.size();
            meta["config"] = json::parse(serialize_config(cfg))["phantom"];
            std::ofstream mout(base.string() + "_meta.json", std::ios::binary);
            mout << meta.dump(2) << "\n";
            for (const char* suffix :
                 {"_angio.pgm", "_depth.pfm", "_seg.pgm", "_centerline.ply", "_meta.json"})
                report.outputs.push_back((base.string() + suffix));
        }
    });
    report.write(common.out / "run_report.json");
    if (common.verbose)
        std::cerr << "phantom: wrote " << n << " samples to " << common.out << "\n";
    return 0;
}

int cmd_train(const CommonOptions& common, const PipelineConfig& cfg,
              const std::filesystem::path& data_dir) {
    std::filesystem::create_directories(common.out);
    RunReport report;
    report.command = "train";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    Dataset ds = timer.run("load", [&] { return load_dataset(data_dir); });
    const int h = ds.angiograms[0].height, w = ds.angiograms[0].width;
    for (const auto& img : ds.angiograms)
        if (img.width != w || img.height != h)
            throw config_error("train: mixed image dimensions in dataset");
    if (h % (1 << cfg.network.levels) != 0 || w % (1 << cfg.network.levels) != 0)
        throw config_error("train: image dimensions not divisible by 2^levels");
    if (cfg.train.batch_size < 1 || cfg.train.steps < 1)
        throw config_error("train: steps and batch size must be positive");

    const int n_total = static_cast<int>(ds.stems.size());
    const int n_train = std::max(1, std::min(n_total, static_cast<int>(std::ceil(
                                                          cfg.train.train_fraction * n_total))));

    ScNetTopology topo{cfg.network.levels, cfg.network.base_width, 1};
    auto params = init_params<float>(topo, common.seed);
    auto adam = make_adam_state(params);
    std::mt19937_64 order_rng(common.seed ^ 0x5851f42d4c957f2dull);

    std::ofstream log(common.out / "train_log.jsonl", std::ios::binary);
    const SsimParams ssim;

    std::vector<int> order;
    auto next_index = [&]() {
        if (order.empty()) {
            order.resize(n_train);
            for (int i = 0; i < n_train; ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), order_rng);
        }
        const int idx = order.back();
        order.pop_back();
        return idx;
    };

    timer.run("train", [&] {
        const int b = std::min(cfg.train.batch_size, n_train);
        for (int step = 0; step < cfg.train.steps; ++step) {
            Tensor4f input(b, 1, h, w), gt_depth(b, 1, h, w), gt_seg(b, 1, h, w);
            for (int k = 0; k < b; ++k) {
                const int idx = next_index();
                std::copy(ds.angiograms[idx].data.begin(), ds.angiograms[idx].data.end(),
                          input.plane(k, 0));
                std::copy(ds.depths[idx].data.begin(), ds.depths[idx].data.end(),
                          gt_depth.plane(k, 0));
                std::copy(ds.segs[idx].data.begin(), ds.segs[idx].data.end(),
                          gt_seg.plane(k, 0));
            }
            ForwardTrace<float> trace;
            auto out = forward_train(params, input, trace, true);
            LossGrads<float> grads;
            auto lb = loss_total(out.pred_depth, out.pred_seg, gt_depth, gt_seg, cfg.loss, ssim,
                                 &grads);
            auto pgrads = backward(params, trace, grads.d_pred_depth, grads.d_pred_seg);
            adam_step(params, pgrads, adam, static_cast<float>(cfg.train.lr));

            json line;
            line["step"] = step;
            line["l_seg"] = lb.seg;
            line["l_accuracy"] = lb.accuracy;
            line["l_structure"] = lb.structure;
            line["l_total"] = lb.total;
            log << line.dump() << "\n";
            if (common.verbose && step % 20 == 0)
                std::cerr << "step " << step << " l_total " << lb.total << "\n";
        }
    });

    timer.run("save", [&] { save_checkpoint(params, common.out / "scnet.scn"); });
    report.outputs.push_back((common.out / "scnet.scn").string());
    report.outputs.push_back((common.out / "train_log.jsonl").string());

    json split;
    split["n_total"] = n_total;
    split["n_train"] = n_train;
    split["n_test"] = n_total - n_train;
    report.metrics_json = split.dump();
    report.write(common.out / "run_report.json");
    return 0;
}

int cmd_predict(const CommonOptions& common, const PipelineConfig& cfg,
                const std::filesystem::path& checkpoint, const std::filesystem::path& angiogram,
                bool topology_pinned) {
    std::filesystem::create_directories(common.out);
    RunReport report;
    report.command = "predict";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    auto params = timer.run("load", [&] { return load_checkpoint(checkpoint); });
    if (topology_pinned) {
        const ScNetTopology want{cfg.network.levels, cfg.network.base_width, 1};
        if (!(params.topo == want))
            throw checkpoint_mismatch_error(
                "checkpoint topology (levels " + std::to_string(params.topo.levels) +
                ", base width " + std::to_string(params.topo.base_width) +
                ") does not match the configured network");
    }
    Image2D angio = load_pgm(angiogram);
    if (angio.width % (1 << params.topo.levels) != 0 ||
        angio.height % (1 << params.topo.levels) != 0)
        throw config_error("predict: image dimensions not divisible by 2^levels");

    auto out = timer.run("forward", [&] { return forward_infer(params, image_to_tensor(angio)); });
    timer.run("save", [&] {
        save_pfm(tensor_to_image(out.pred_depth, 0), common.out / "pred_depth.pfm");
        save_pgm(tensor_to_image(out.pred_seg, 0), common.out / "pred_seg.pgm");
    });
    report.outputs.push_back((common.out / "pred_depth.pfm").string());
    report.outputs.push_back((common.out / "pred_seg.pgm").string());
    report.write(common.out / "run_report.json");
    return 0;
}

int cmd_reconstruct(const CommonOptions& common, const PipelineConfig& cfg,
                    const std::filesystem::path& seg_path,
                    const std::filesystem::path& depth_path, const std::string& stem) {
    RunReport report;
    report.command = "reconstruct";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    const BinaryMask seg = load_mask_pgm(seg_path);
    const Image2D depth_img = load_pfm(depth_path);
    DepthMap depth(depth_img); // predictions are defined everywhere

    const std::filesystem::path stem_path = common.out / stem;
    std::filesystem::create_directories(stem_path.parent_path().empty()
                                            ? common.out
                                            : stem_path.parent_path());

    auto rec = timer.run("reconstruct", [&] { return recon::reconstruct(seg, depth, cfg.recon); });
    if (rec.cloud.empty())
        std::cerr << "warning: empty segmentation, reconstruction outputs are empty\n";
    if (rec.filled_invalid > 0 && common.verbose)
        std::cerr << "reconstruct: filled " << rec.filled_invalid
                  << " centerline pixels from nearest valid depth\n";

    timer.run("export", [&] {
        recon::export_ply_cloud(rec.cloud, stem_path.string() + "_cloud.ply");
        recon::export_ply_mesh(rec.tubes, stem_path.string() + "_tubes.ply");
        std::vector<Polyline3> lines;
        for (const auto& l : rec.lifted.polylines)
            lines.push_back(recon::resample_polyline(l, cfg.recon.resample_step_px * cfg.recon.sx));
        recon::export_polydata(lines, stem_path.string() + "_lines.vtk");
        std::ofstream gout(stem_path.string() + "_graph.json", std::ios::binary);
        gout << vg::graph_to_json(rec.graph) << "\n";
    });
    for (const char* suffix : {"_cloud.ply", "_tubes.ply", "_lines.vtk", "_graph.json"})
        report.outputs.push_back(stem_path.string() + suffix);

    json extra;
    extra["filled_invalid"] = rec.filled_invalid;
    extra["segments"] = rec.graph.segments.size();
    extra["nodes"] = rec.graph.nodes.size();
    extra["cloud_points"] = rec.cloud.size();
    report.metrics_json = extra.dump();
    report.write(stem_path.string() + "_report.json");
    return 0;
}

int cmd_eval_depth(const CommonOptions& common, const PipelineConfig& cfg,
                   const std::filesystem::path& pred, const std::filesystem::path& gt,
                   const std::optional<std::filesystem::path>& mask) {
    std::filesystem::create_directories(common.out);
    RunReport report;
    report.command = "eval-depth";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    DepthMap pred_map{load_pfm(pred)};
    DepthMap gt_map{load_pfm(gt)};
    if (mask) gt_map.valid = load_mask_pgm(*mask); // vessel-only evaluation

    auto rep = timer.run("metrics",
                         [&] { return metrics::evaluate_depth(pred_map, gt_map, cfg.eval); });
    std::cout << rep.to_json() << "\n";
    std::ofstream mout(common.out / "depth_metrics.json", std::ios::binary);
    mout << rep.to_json() << "\n";
    report.outputs.push_back((common.out / "depth_metrics.json").string());
    report.metrics_json = rep.to_json();
    report.write(common.out / "run_report.json");
    return 0;
}

int cmd_eval_recon(const CommonOptions& common, const PipelineConfig& cfg,
                   const std::filesystem::path& pred, const std::filesystem::path& gt) {
    std::filesystem::create_directories(common.out);
    RunReport report;
    report.command = "eval-recon";
    report.config_hash = config_hash(common.config_path, cfg);
    StageTimer timer(report);

    const PointCloud3 a = recon::load_ply_cloud(pred);
    const PointCloud3 b = recon::load_ply_cloud(gt);
    auto rep = timer.run("metrics", [&] { return metrics::evaluate_clouds(a, b); });
    std::cout << rep.to_json() << "\n";
    std::ofstream mout(common.out / "recon_metrics.json", std::ios::binary);
    mout << rep.to_json() << "\n";
    report.outputs.push_back((common.out / "recon_metrics.json").string());
    report.metrics_json = rep.to_json();
    report.write(common.out / "run_report.json");
    return 0;
}

} // namespace octarec::cli

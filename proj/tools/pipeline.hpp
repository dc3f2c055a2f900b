#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "octarec/losses.hpp"
#include "octarec/metrics.hpp"
#include "octarec/phantom.hpp"
#include "octarec/recon3d.hpp"
#include "octarec/scnet.hpp"

namespace octarec::cli {

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NetworkConfig {
    int levels = 4;
    int base_width = 8;
};

struct TrainConfig {
    int steps = 200;
    int batch_size = 2;
    double lr = 1e-3;
    double train_fraction = 0.7; // mirrors a 56/24 split of 80 samples
};

struct PipelineConfig {
    phantom::PhantomConfig phantom;
    int phantom_n = 60;
    NetworkConfig network;
    TrainConfig train;
    LossWeights loss;
    recon::ReconConfig recon;
    metrics::DepthEvalOptions eval;
};

/// Parses the JSON config; unknown keys anywhere are rejected.
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the raw bytes.
std::uint64_t fnv1a(const std::string& bytes);

/// Hash of the config file bytes when one was given, else of the serialized
/// effective configuration.
std::uint64_t config_hash(const std::optional<std::filesystem::path>& config_path,
                          const PipelineConfig& cfg);

std::string serialize_config(const PipelineConfig& cfg);

struct RunReport {
    std::string command;
    std::uint64_t config_hash = 0;
    std::map<std::string, double> timings_s;
    std::vector<std::string> outputs;
    std::string metrics_json; // embedded report, empty if none

    void write(const std::filesystem::path& path) const;
};

struct CommonOptions {
    std::optional<std::filesystem::path> config_path;
    std::filesystem::path out = ".";
    std::uint64_t seed = 1;
    int threads = 0; // 0 = library default
    bool verbose = false;
};

int cmd_phantom(const CommonOptions& common, const PipelineConfig& cfg, int n);
int cmd_train(const CommonOptions& common, const PipelineConfig& cfg,
              const std::filesystem::path& data_dir);
int cmd_predict(const CommonOptions& common, const PipelineConfig& cfg,
                const std::filesystem::path& checkpoint, const std::filesystem::path& angiogram,
                bool topology_pinned);
int cmd_reconstruct(const CommonOptions& common, const PipelineConfig& cfg,
                    const std::filesystem::path& seg_path,
                    const std::filesystem::path& depth_path, const std::string& stem);
int cmd_eval_depth(const CommonOptions& common, const PipelineConfig& cfg,
                   const std::filesystem::path& pred, const std::filesystem::path& gt,
                   const std::optional<std::filesystem::path>& mask);
int cmd_eval_recon(const CommonOptions& common, const PipelineConfig& cfg,
                   const std::filesystem::path& pred, const std::filesystem::path& gt);

} // namespace octarec::cli

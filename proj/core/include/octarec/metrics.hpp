#pragma once

#include <string>

#include "octarec/geometry.hpp"
#include "octarec/image.hpp"
#include "octarec/ssim.hpp"

namespace octarec::metrics {

/// Pixels enter the depth metrics when they are valid in the ground truth and
/// the ground-truth depth exceeds eval_epsilon (ratios are undefined at 0).
struct DepthEvalOptions {
    double eval_epsilon = 1e-6;
    SsimParams ssim;
};

struct DepthMetricReport {
    double acc_delta1 = 0.0; // fraction passing max(d/d*, d*/d) < 1.25
    double acc_delta2 = 0.0; // threshold 1.25^2
    double acc_delta3 = 0.0; // threshold 1.25^3
    double ard = 0.0;
    double rmse = 0.0;
    double ssim = 0.0;
    long n_pixels = 0;

    std::string to_json() const;
};

struct CloudMetricReport {
    double chamfer = 0.0;
    double hausdorff = 0.0;
    size_t size_a = 0;
    size_t size_b = 0;
    std::string units = "mm";

    std::string to_json() const;
};

/// Fraction of evaluated pixels whose two-sided depth ratio is below T.
double delta_accuracy(const DepthMap& pred, const DepthMap& gt, double threshold,
                      const DepthEvalOptions& opt = {});

/// Mean absolute relative difference |d - d*| / d*.
double ard(const DepthMap& pred, const DepthMap& gt, const DepthEvalOptions& opt = {});

/// Root mean squared depth error.
double rmse(const DepthMap& pred, const DepthMap& gt, const DepthEvalOptions& opt = {});

/// Mean Gaussian-windowed SSIM between the two full images (shared
/// implementation with the structural loss).
double mean_ssim(const Image2D& a, const Image2D& b, const SsimParams& p = {});

/// All depth metrics in one pass.
DepthMetricReport evaluate_depth(const DepthMap& pred, const DepthMap& gt,
                                 const DepthEvalOptions& opt = {});

/// Symmetric mean nearest-neighbor distance:
/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).
double chamfer(const PointCloud3& a, const PointCloud3& b);
double chamfer_bruteforce(const PointCloud3& a, const PointCloud3& b);

/// Exact (100th percentile) symmetric Hausdorff distance.
double hausdorff(const PointCloud3& a, const PointCloud3& b);
double hausdorff_bruteforce(const PointCloud3& a, const PointCloud3& b);

CloudMetricReport evaluate_clouds(const PointCloud3& a, const PointCloud3& b);

} // namespace octarec::metrics

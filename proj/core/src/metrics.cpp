#include "octarec/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "octarec/errors.hpp"
#include "octarec/kdtree.hpp"

namespace octarec::metrics {

namespace {

void check_dims(const DepthMap& pred, const DepthMap& gt) {
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw std::invalid_argument("depth metrics: dimension mismatch");
}

template <typename F>
long for_each_evaluable(const DepthMap& pred, const DepthMap& gt, const DepthEvalOptions& opt,
                        F&& f) {
    check_dims(pred, gt);
    long n = 0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x) {
            if (!gt.valid.at(x, y)) continue;
            const double dstar = gt.image.at(x, y);
            if (dstar <= opt.eval_epsilon) continue;
            f(pred.image.at(x, y), dstar);
            ++n;
        }
    if (n == 0) throw undefined_metric_error("depth metrics: no evaluable pixels");
    return n;
}

double directed_mean_nn(const PointCloud3& from, const KdTree3& to) {
    double sum = 0.0;
    for (const auto& p : from.points) sum += std::sqrt(to.nearest(p).dist2);
    return sum / static_cast<double>(from.points.size());
}

double directed_max_nn(const PointCloud3& from, const KdTree3& to) {
    double worst = 0.0;
    for (const auto& p : from.points) worst = std::max(worst, std::sqrt(to.nearest(p).dist2));
    return worst;
}

double brute_nn_dist2(const Vec3& q, const PointCloud3& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : set.points) {
        const Vec3 d = p - q;
        const double d2 = d.dot(d);
        if (d2 < best) best = d2;
    }
    return best;
}

void check_nonempty(const PointCloud3& a, const PointCloud3& b) {
    if (a.empty() || b.empty())
        throw undefined_metric_error("cloud metrics: empty point set");
}

} // namespace

double delta_accuracy(const DepthMap& pred, const DepthMap& gt, double threshold,
                      const DepthEvalOptions& opt) {
    long pass = 0;
    const long n = for_each_evaluable(pred, gt, opt, [&](double d, double dstar) {
        const double ratio = std::max(d / dstar, dstar / d);
        if (ratio < threshold) ++pass;
    });
    return static_cast<double>(pass) / static_cast<double>(n);
}

double ard(const DepthMap& pred, const DepthMap& gt, const DepthEvalOptions& opt) {
    double sum = 0.0;
    const long n = for_each_evaluable(
        pred, gt, opt, [&](double d, double dstar) { sum += std::abs(d - dstar) / dstar; });
    return sum / static_cast<double>(n);
}

double rmse(const DepthMap& pred, const DepthMap& gt, const DepthEvalOptions& opt) {
    double sum = 0.0;
    const long n = for_each_evaluable(pred, gt, opt, [&](double d, double dstar) {
        sum += (d - dstar) * (d - dstar);
    });
    return std::sqrt(sum / static_cast<double>(n));
}

double mean_ssim(const Image2D& a, const Image2D& b, const SsimParams& p) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("mean_ssim: dimension mismatch");
    std::vector<double> da(a.data.begin(), a.data.end());
    std::vector<double> db(b.data.begin(), b.data.end());
    return ssim_mean(da.data(), db.data(), a.width, a.height, p);
}

DepthMetricReport evaluate_depth(const DepthMap& pred, const DepthMap& gt,
                                 const DepthEvalOptions& opt) {
    DepthMetricReport r;
    r.acc_delta1 = delta_accuracy(pred, gt, 1.25, opt);
    r.acc_delta2 = delta_accuracy(pred, gt, 1.25 * 1.25, opt);
    r.acc_delta3 = delta_accuracy(pred, gt, 1.25 * 1.25 * 1.25, opt);
    r.ard = ard(pred, gt, opt);
    r.rmse = rmse(pred, gt, opt);
    r.ssim = mean_ssim(pred.image, gt.image, opt.ssim);
    long n = 0;
    for_each_evaluable(pred, gt, opt, [&](double, double) { ++n; });
    r.n_pixels = n;
    return r;
}

double chamfer(const PointCloud3& a, const PointCloud3& b) {
    check_nonempty(a, b);
    const KdTree3 ta(a.points), tb(b.points);
    return 0.5 * (directed_mean_nn(a, tb) + directed_mean_nn(b, ta));
}

double chamfer_bruteforce(const PointCloud3& a, const PointCloud3& b) {
    check_nonempty(a, b);
    double sum_ab = 0.0, sum_ba = 0.0;
    for (const auto& p : a.points) sum_ab += std::sqrt(brute_nn_dist2(p, b));
    for (const auto& p : b.points) sum_ba += std::sqrt(brute_nn_dist2(p, a));
    return 0.5 * (sum_ab / static_cast<double>(a.points.size()) +
                  sum_ba / static_cast<double>(b.points.size()));
}

double hausdorff(const PointCloud3& a, const PointCloud3& b) {
    check_nonempty(a, b);
    const KdTree3 ta(a.points), tb(b.points);
    return std::max(directed_max_nn(a, tb), directed_max_nn(b, ta));
}

double hausdorff_bruteforce(const PointCloud3& a, const PointCloud3& b) {
    check_nonempty(a, b);
    double worst_ab = 0.0, worst_ba = 0.0;
    for (const auto& p : a.points) worst_ab = std::max(worst_ab, std::sqrt(brute_nn_dist2(p, b)));
    for (const auto& p : b.points) worst_ba = std::max(worst_ba, std::sqrt(brute_nn_dist2(p, a)));
    return std::max(worst_ab, worst_ba);
}

CloudMetricReport evaluate_clouds(const PointCloud3& a, const PointCloud3& b) {
    CloudMetricReport r;
    r.chamfer = chamfer(a, b);
    r.hausdorff = hausdorff(a, b);
    r.size_a = a.size();
    r.size_b = b.size();
    return r;
}

std::string DepthMetricReport::to_json() const {
    nlohmann::json j;
    j["acc_delta1"] = acc_delta1;
    j["acc_delta2"] = acc_delta2;
    j["acc_delta3"] = acc_delta3;
    j["ard"] = ard;
    j["rmse"] = rmse;
    j["ssim"] = ssim;
    j["n_pixels"] = n_pixels;
    return j.dump(2);
}

std::string CloudMetricReport::to_json() const {
    nlohmann::json j;
    j["chamfer"] = chamfer;
    j["hausdorff"] = hausdorff;
    j["size_a"] = size_a;
    j["size_b"] = size_b;
    j["units"] = units;
    return j.dump(2);
}

} // namespace octarec::metrics

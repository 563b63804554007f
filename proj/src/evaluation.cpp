#include "tsdfslam/evaluation.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tsdfslam/parallel.hpp"

namespace tsdfslam {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> AssociateTrajectories(const Trajectory& a,
                                                                       const Trajectory& b,
                                                                       double max_dt) {
    std::vector<double> ta(a.size()), tb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ta[i] = a[i].timestamp;
    for (std::size_t j = 0; j < b.size(); ++j) tb[j] = b[j].timestamp;
    return MatchTimestamps(ta, tb, max_dt);
}

}  // namespace

AteResult AteRmse(const Trajectory& estimated, const Trajectory& ground_truth, double max_dt) {
    const auto pairs = AssociateTrajectories(estimated, ground_truth, max_dt);
    if (pairs.size() < 3) {
        throw std::runtime_error("need at least 3 associated poses, got " +
                                 std::to_string(pairs.size()));
    }
    Eigen::Vector3d centroid_est = Eigen::Vector3d::Zero();
    Eigen::Vector3d centroid_gt = Eigen::Vector3d::Zero();
    for (const auto& [i, j] : pairs) {
        centroid_est += estimated[i].pose.translation();
        centroid_gt += ground_truth[j].pose.translation();
    }
    centroid_est /= static_cast<double>(pairs.size());
    centroid_gt /= static_cast<double>(pairs.size());

    Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
    for (const auto& [i, j] : pairs) {
        w += (ground_truth[j].pose.translation() - centroid_gt) *
             (estimated[i].pose.translation() - centroid_est).transpose();
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s(2, 2) = -1.0;
    const Eigen::Matrix3d rotation = svd.matrixU() * s * svd.matrixV().transpose();
    const Eigen::Vector3d translation = centroid_gt - rotation * centroid_est;

    AteResult result;
    result.alignment = Pose(rotation, translation);
    result.pairs = pairs.size();
    double sum_sq = 0.0;
    for (const auto& [i, j] : pairs) {
        const Eigen::Vector3d aligned = result.alignment * estimated[i].pose.translation();
        sum_sq += (aligned - ground_truth[j].pose.translation()).squaredNorm();
    }
    result.rmse = std::sqrt(sum_sq / static_cast<double>(pairs.size()));
    return result;
}

std::vector<RpeSample> RpeOverTime(const Trajectory& estimated, const Trajectory& ground_truth,
                                   double delta, double max_dt) {
    if (!(delta > 0)) throw std::invalid_argument("delta must be positive");
    const auto pairs = AssociateTrajectories(estimated, ground_truth, max_dt);
    std::vector<RpeSample> samples;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double target = estimated[pairs[k].first].timestamp + delta;
        std::size_t best = pairs.size();
        double best_err = max_dt;
        for (std::size_t m = k + 1; m < pairs.size(); ++m) {
            const double err = std::abs(estimated[pairs[m].first].timestamp - target);
            if (err <= best_err) {
                best_err = err;
                best = m;
            }
            if (estimated[pairs[m].first].timestamp > target + max_dt) break;
        }
        if (best == pairs.size()) continue;
        const Pose& p0 = estimated[pairs[k].first].pose;
        const Pose& p1 = estimated[pairs[best].first].pose;
        const Pose& q0 = ground_truth[pairs[k].second].pose;
        const Pose& q1 = ground_truth[pairs[best].second].pose;
        const Pose rel_est = p0.Inverse() * p1;
        const Pose rel_gt = q0.Inverse() * q1;
        const Pose error = rel_gt.Inverse() * rel_est;
        samples.push_back({estimated[pairs[k].first].timestamp, error.translation().norm()});
    }
    return samples;
}

namespace {

class GridNn {
  public:
    GridNn(const std::vector<Eigen::Vector3f>& points, double cell)
        : cell_(cell), points_(points) {
        min_cell_ = Eigen::Vector3i::Constant(std::numeric_limits<int>::max());
        max_cell_ = Eigen::Vector3i::Constant(std::numeric_limits<int>::min());
        std::vector<Eigen::Vector3i> coords(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            coords[i] = CellOf(points[i]);
            min_cell_ = min_cell_.cwiseMin(coords[i]);
            max_cell_ = max_cell_.cwiseMax(coords[i]);
        }
        // Bucket by counting sort over hashed cells.
        std::vector<std::uint32_t> counts;
        for (const Eigen::Vector3i& c : coords) {
            const auto [bucket, inserted] =
                cells_.Insert(c, static_cast<std::uint32_t>(counts.size()));
            if (inserted) counts.push_back(0);
            ++counts[bucket];
        }
        starts_.resize(counts.size() + 1, 0);
        for (std::size_t b = 0; b < counts.size(); ++b) starts_[b + 1] = starts_[b] + counts[b];
        ids_.resize(points.size());
        std::vector<std::uint32_t> cursor(starts_.begin(), starts_.end() - 1);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::uint32_t bucket = *cells_.Find(coords[i]);
            ids_[cursor[bucket]++] = static_cast<std::uint32_t>(i);
        }
    }

    double NearestDistance(const Eigen::Vector3f& q) const {
        const Eigen::Vector3i qc = CellOf(q);
        const int r_limit = std::max((qc - min_cell_).cwiseAbs().maxCoeff(),
                                     (max_cell_ - qc).cwiseAbs().maxCoeff());
        // Shells strictly inside the reference bounding box's gap are empty.
        int r_first = 0;
        for (int i = 0; i < 3; ++i) {
            r_first = std::max({r_first, min_cell_[i] - qc[i], qc[i] - max_cell_[i]});
        }
        double best = std::numeric_limits<double>::infinity();
        for (int r = r_first; r <= r_limit; ++r) {
            if (best <= (r - 1) * cell_) break;
            VisitShell(qc, r, [&](const Eigen::Vector3i& c) {
                const std::uint32_t* bucket = cells_.Find(c);
                if (!bucket) return;
                for (std::uint32_t k = starts_[*bucket]; k < starts_[*bucket + 1]; ++k) {
                    const double d =
                        (points_[ids_[k]] - q).cast<double>().norm();
                    best = std::min(best, d);
                }
            });
        }
        return best;
    }

  private:
    Eigen::Vector3i CellOf(const Eigen::Vector3f& p) const {
        return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell_)),
                               static_cast<int>(std::floor(p.y() / cell_)),
                               static_cast<int>(std::floor(p.z() / cell_)));
    }

    // Enumerates the cells at Chebyshev radius r that fall inside the
    // reference bounding box: two x faces, two y faces without the x rims,
    // two z faces without either rim.
    template <typename Fn>
    void VisitShell(const Eigen::Vector3i& center, int r, Fn&& fn) const {
        const Eigen::Vector3i lo = min_cell_ - center;
        const Eigen::Vector3i hi = max_cell_ - center;
        if (r == 0) {
            fn(center);
            return;
        }
        const auto face = [&](int axis, int side, int ua, int u0, int u1, int va, int v0,
                              int v1) {
            if (side < lo[axis] || side > hi[axis]) return;
            u0 = std::max(u0, lo[ua]);
            u1 = std::min(u1, hi[ua]);
            v0 = std::max(v0, lo[va]);
            v1 = std::min(v1, hi[va]);
            Eigen::Vector3i p;
            p[axis] = side;
            for (int u = u0; u <= u1; ++u) {
                p[ua] = u;
                for (int v = v0; v <= v1; ++v) {
                    p[va] = v;
                    fn(center + p);
                }
            }
        };
        for (int side = -r; side <= r; side += 2 * r) {
            face(0, side, 1, -r, r, 2, -r, r);
            face(1, side, 0, -r + 1, r - 1, 2, -r, r);
            face(2, side, 0, -r + 1, r - 1, 1, -r + 1, r - 1);
        }
    }

    double cell_;
    const std::vector<Eigen::Vector3f>& points_;
    Eigen::Vector3i min_cell_, max_cell_;
    CoordHashMap cells_;
    std::vector<std::uint32_t> starts_;
    std::vector<std::uint32_t> ids_;
};

}  // namespace

std::vector<double> NearestDistances(const std::vector<Eigen::Vector3f>& queries,
                                     const std::vector<Eigen::Vector3f>& reference, int threads) {
    if (reference.empty()) throw std::invalid_argument("reference cloud is empty");
    Eigen::Vector3f lo = reference[0], hi = reference[0];
    for (const Eigen::Vector3f& p : reference) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).cast<double>().norm();
    const GridNn grid(reference, std::max(diag / 256.0, 1e-6));
    std::vector<double> distances(queries.size());
    ParallelFor(queries.size(), threads,
                [&](std::size_t i) { distances[i] = grid.NearestDistance(queries[i]); });
    return distances;
}

std::vector<double> DistanceCdf(const std::vector<double>& distances,
                                const std::vector<double>& bin_edges) {
    if (distances.empty()) throw std::invalid_argument("no distances");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (!(bin_edges[i] > bin_edges[i - 1])) {
            throw std::invalid_argument("bin edges must be ascending");
        }
    }
    std::vector<double> sorted = distances;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cdf(bin_edges.size(), 0.0);
    for (std::size_t i = 0; i < bin_edges.size(); ++i) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), bin_edges[i]);
        cdf[i] = 100.0 * static_cast<double>(it - sorted.begin()) /
                 static_cast<double>(sorted.size());
    }
    return cdf;
}

}  // namespace tsdfslam

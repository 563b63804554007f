#include "tsdfslam/geometry.hpp"

#include <cmath>

namespace tsdfslam {

bool Pose::IsValid(double tol) const {
    if (!rotation_.allFinite() || !translation_.allFinite()) return false;
    const Eigen::Matrix3d err = rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation_.determinant() - 1.0) <= tol;
}

Pose ExpMap(const Twist& xi) {
    const Eigen::Vector3d& w = xi.w;
    const double theta = w.norm();
    const Eigen::Matrix3d hat = SkewMatrix(w);
    const Eigen::Matrix3d hat2 = hat * hat;

    double a;  // sin(theta) / theta
    double b;  // (1 - cos(theta)) / theta^2
    double c;  // (theta - sin(theta)) / theta^3
    if (theta < kSmallAngle) {
        const double t2 = theta * theta;
        a = 1.0 - t2 / 6.0;
        b = 0.5 - t2 / 24.0;
        c = 1.0 / 6.0 - t2 / 120.0;
    } else {
        const double t2 = theta * theta;
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / t2;
        c = (theta - std::sin(theta)) / (t2 * theta);
    }

    const Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity() + a * hat + b * hat2;
    const Eigen::Matrix3d v_matrix = Eigen::Matrix3d::Identity() + b * hat + c * hat2;
    return {rotation, v_matrix * xi.v};
}

Twist LogMap(const Pose& pose) {
    const Eigen::AngleAxisd aa(pose.rotation());
    const Eigen::Vector3d w = aa.angle() * aa.axis();
    const double theta = w.norm();
    const Eigen::Matrix3d hat = SkewMatrix(w);
    const Eigen::Matrix3d hat2 = hat * hat;

    Eigen::Matrix3d v_inv;
    if (theta < kSmallAngle) {
        v_inv = Eigen::Matrix3d::Identity() - 0.5 * hat + hat2 / 12.0;
    } else {
        const double half = 0.5 * theta;
        const double cot = std::cos(half) / std::sin(half);
        const double coeff = (1.0 - half * cot) / (theta * theta);
        v_inv = Eigen::Matrix3d::Identity() - 0.5 * hat + coeff * hat2;
    }
    return {v_inv * pose.translation(), w};
}

}  // namespace tsdfslam

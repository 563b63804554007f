#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tsdfslam {

// Pinhole camera model. Pixel (u, v) samples the scene exactly at image
// coordinate (u, v); the same convention is used by projection,
// back-projection and the synthetic renderer.
struct CameraIntrinsics {
    double fx = 525.0;
    double fy = 525.0;
    double cx = 319.5;
    double cy = 239.5;
    int width = 640;
    int height = 480;
    double depth_scale = 5000.0;  // raw 16-bit units per meter

    bool Valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 &&
               cx < static_cast<double>(width) && cy > 0.0 && cy < static_cast<double>(height) &&
               depth_scale > 0.0;
    }

    // Intrinsics of the image decimated by 2^level.
    CameraIntrinsics Scaled(int level) const {
        const double s = 1.0 / static_cast<double>(1 << level);
        CameraIntrinsics k = *this;
        k.fx *= s;
        k.fy *= s;
        k.cx *= s;
        k.cy *= s;
        k.width = width >> level;
        k.height = height >> level;
        return k;
    }
};

// Back-projects pixel (u, v) with the given metric depth into the camera frame.
inline Eigen::Vector3d Backproject(double u, double v, double depth, const CameraIntrinsics& k) {
    return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

// Projects a camera-frame point (z > 0) to sub-pixel image coordinates.
inline Eigen::Vector2d Project(const Eigen::Vector3d& x, const CameraIntrinsics& k) {
    return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

// Minimal rigid-motion increment: translational part v (meters) and
// rotational part w (radians).
struct Twist {
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d w = Eigen::Vector3d::Zero();

    Twist() = default;
    Twist(const Eigen::Vector3d& v_in, const Eigen::Vector3d& w_in) : v(v_in), w(w_in) {}
    explicit Twist(const Eigen::Matrix<double, 6, 1>& xi) : v(xi.head<3>()), w(xi.tail<3>()) {}

    Eigen::Matrix<double, 6, 1> Vector() const {
        Eigen::Matrix<double, 6, 1> xi;
        xi << v, w;
        return xi;
    }
    double Norm() const { return Vector().norm(); }
};

// Rigid-body transform. The rotation is kept orthonormal with det +1.
class Pose {
  public:
    Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
    Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
        : rotation_(rotation), translation_(translation) {}
    Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation)
        : rotation_(q.normalized().toRotationMatrix()), translation_(translation) {}

    static Pose Identity() { return Pose(); }

    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector3d& translation() const { return translation_; }
    Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }

    Eigen::Vector3d operator*(const Eigen::Vector3d& x) const {
        return rotation_ * x + translation_;
    }

    Pose operator*(const Pose& other) const {
        return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
    }

    Pose Inverse() const {
        const Eigen::Matrix3d rt = rotation_.transpose();
        return {rt, -(rt * translation_)};
    }

    Eigen::Matrix4d Matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation_;
        m.topRightCorner<3, 1>() = translation_;
        return m;
    }

    bool IsValid(double tol = 1e-9) const;

  private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector3d translation_;
};

inline Eigen::Matrix3d SkewMatrix(const Eigen::Vector3d& w) {
    Eigen::Matrix3d s;
    s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return s;
}

// Exponential map se(3) -> SE(3). Rodrigues closed form with a Taylor branch
// below kSmallAngle to avoid division by near-zero angles.
Pose ExpMap(const Twist& xi);

// Logarithm map SE(3) -> se(3), inverse of ExpMap for rotation angles < pi.
Twist LogMap(const Pose& pose);

inline constexpr double kSmallAngle = 1e-6;

}  // namespace tsdfslam

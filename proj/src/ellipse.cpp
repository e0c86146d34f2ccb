#include "looptrack/ellipse.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace looptrack {

std::optional<EllipseFit> fit_ellipse(std::span<const std::array<double, 2>> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 5) return std::nullopt;

    // Center the data; the conic is refit in shifted coordinates and the
    // center translated back at the end.
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p[0];
        my += p[1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = points[i][0] - mx;
        const double y = points[i][1] - my;
        d1(i, 0) = x * x;
        d1(i, 1) = x * y;
        d1(i, 2) = y * y;
        d2(i, 0) = x;
        d2(i, 1) = y;
        d2(i, 2) = 1.0;
    }

    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;

    Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Matrix3d t = -lu.inverse() * s2.transpose();
    const Eigen::Matrix3d m_full = s1 + s2 * t;

    // Premultiply by C^-1 for the constraint matrix C = [[0,0,2],[0,-1,0],[2,0,0]].
    Eigen::Matrix3d m;
    m.row(0) = m_full.row(2) / 2.0;
    m.row(1) = -m_full.row(1);
    m.row(2) = m_full.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> eig(m);
    if (eig.info() != Eigen::Success) return std::nullopt;

    // The elliptic solution is the eigenvector with 4ac - b^2 > 0.
    Eigen::Vector3d a1 = Eigen::Vector3d::Zero();
    bool found = false;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(eig.eigenvalues()(k).imag()) > 1e-12) continue;
        const Eigen::Vector3d v = eig.eigenvectors().col(k).real();
        const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        if (cond > 0.0) {
            a1 = v;
            found = true;
            break;
        }
    }
    if (!found) return std::nullopt;

    const Eigen::Vector3d a2 = t * a1;
    const double a = a1(0), b = a1(1), c = a1(2);
    const double d = a2(0), e = a2(1), f = a2(2);

    const double denom = b * b - 4.0 * a * c;  // < 0 for an ellipse
    if (!(denom < 0.0)) return std::nullopt;

    const double cx = (2.0 * c * d - b * e) / denom;
    const double cy = (2.0 * a * e - b * d) / denom;

    // Constant term after translating the conic to its center.
    const double f_center = a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f;
    if (f_center == 0.0) return std::nullopt;

    Eigen::Matrix2d quad;
    quad << a, b / 2.0, b / 2.0, c;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qeig(quad);
    if (qeig.info() != Eigen::Success) return std::nullopt;

    // a*u^2 + ... + f_center = 0  =>  semi-axis along eigenvector i is
    // sqrt(-f_center / lambda_i); valid only when the signs oppose.
    const double l0 = qeig.eigenvalues()(0), l1 = qeig.eigenvalues()(1);
    const double axis_sq0 = -f_center / l0, axis_sq1 = -f_center / l1;
    if (!(axis_sq0 > 0.0) || !(axis_sq1 > 0.0)) return std::nullopt;

    const int major_idx = axis_sq0 >= axis_sq1 ? 0 : 1;
    const double semi_major = std::sqrt(std::max(axis_sq0, axis_sq1));
    const double semi_minor = std::sqrt(std::min(axis_sq0, axis_sq1));
    const Eigen::Vector2d dir = qeig.eigenvectors().col(major_idx);
    double theta = std::atan2(dir(1), dir(0));
    if (theta < 0.0) theta += M_PI;
    if (theta >= M_PI) theta -= M_PI;

    EllipseFit fit;
    fit.center_x = cx + mx;
    fit.center_y = cy + my;
    fit.major_axis = 2.0 * semi_major;
    fit.minor_axis = 2.0 * semi_minor;
    fit.orientation = theta;
    if (!std::isfinite(fit.center_x) || !std::isfinite(fit.center_y) ||
        !std::isfinite(fit.major_axis) || !std::isfinite(fit.minor_axis))
        return std::nullopt;
    return fit;
}

}  // namespace looptrack

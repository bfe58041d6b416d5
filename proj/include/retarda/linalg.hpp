#pragma once

#include <Eigen/Dense>

#include <vector>

namespace retarda {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Euclidean norm on state vectors. All vector norms in the library use this.
inline double vnorm(const Vec& v) { return v.norm(); }

/// Spectral norm (largest singular value). Matrix magnitudes use the operator
/// norm induced by the Euclidean vector norm.
inline double opnorm(const Mat& m) { return m.operatorNorm(); }

inline Vec zero_like(const Vec& v) { return Vec::Zero(v.size()); }
inline Mat zero_like(const Mat& m) { return Mat::Zero(m.rows(), m.cols()); }
inline double zero_like(double) { return 0.0; }

inline double magnitude(const Vec& v) { return v.norm(); }
inline double magnitude(const Mat& m) { return m.operatorNorm(); }
inline double magnitude(double x) { return x < 0 ? -x : x; }

}  // namespace retarda

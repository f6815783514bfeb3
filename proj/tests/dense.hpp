// Dense Kronecker-product oracles for small geometries.
#pragma once

#include <random>

#include <Eigen/Dense>

#include "cim/fock.hpp"

namespace dense {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline Mat lower(int N) {
  Mat a = Mat::Zero(N, N);
  for (int n = 1; n < N; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// I (x) ... (x) op (x) ... (x) I with `mode` the slowest digit when 0.
inline Mat embed(const Mat& op, int mode, int modes) {
  const auto N = op.rows();
  Mat out = Mat::Identity(1, 1);
  for (int i = 0; i < modes; ++i) out = kron(out, i == mode ? op : Mat(Mat::Identity(N, N)));
  return out;
}

inline Mat ladder(const cim::FockGeometry& g, int mode) { return embed(lower(g.cutoff()), mode, g.modes()); }

inline Vec to_vec(const cim::MultiModeState& s) {
  Vec v(static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) v(static_cast<Eigen::Index>(k)) = s[k];
  return v;
}

inline double max_diff(const cim::MultiModeState& s, const Vec& v) {
  double m = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) m = std::max(m, std::abs(s[k] - v(static_cast<Eigen::Index>(k))));
  return m;
}

inline cim::MultiModeState random_state(const cim::FockGeometry& g, std::mt19937_64& rng, bool normalize = true) {
  std::normal_distribution<double> n01;
  std::vector<cim::cplx> amps(g.dimension());
  for (auto& a : amps) a = {n01(rng), n01(rng)};
  cim::MultiModeState s(g, std::move(amps));
  if (normalize) s.normalize();
  return s;
}

}  // namespace dense

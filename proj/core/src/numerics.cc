#include "rclm/numerics.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rclm {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_dims(const std::vector<std::size_t>& dims) {
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("tensor extents must be positive");
  }
}

template <typename Real>
using RowMajor =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using ColVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

}  // namespace

template <typename Real>
Tensor<Real>::Tensor(std::vector<std::size_t> dims, Real fill)
    : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(product(dims_), fill);
}

template <typename Real>
Tensor<Real>::Tensor(std::vector<std::size_t> dims, std::vector<Real> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (product(dims_) != data_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match dims product " +
                                std::to_string(product(dims_)));
  }
}

template <typename Real>
void Tensor<Real>::fill(Real v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
bool Tensor<Real>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real x) { return std::isfinite(x); });
}

template <typename Real>
ProbVector<Real>::ProbVector(std::vector<Real> values)
    : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("empty probability vector");
  double sum = 0;
  for (Real v : values_) {
    if (!(v >= 0 && v <= 1)) {
      throw std::invalid_argument("probability outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance<Real>) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum));
  }
}

template <typename Real>
std::size_t ProbVector<Real>::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(values_.begin(), values_.end()) - values_.begin());
}

template <typename Real>
void softmax_inplace(std::span<Real> v) {
  const Real max = *std::max_element(v.begin(), v.end());
  Real sum = 0;
  for (Real& x : v) {
    x = std::exp(x - max);
    sum += x;
  }
  const Real inv = Real(1) / sum;
  for (Real& x : v) x *= inv;
}

template <typename Real>
ProbVector<Real> softmax(std::span<const Real> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  for (Real x : logits) {
    if (!std::isfinite(x)) throw std::domain_error("softmax of non-finite logit");
  }
  std::vector<Real> out(logits.begin(), logits.end());
  softmax_inplace<Real>(out);
  return ProbVector<Real>(typename ProbVector<Real>::Unchecked{}, std::move(out));
}

template <typename Real>
Real cross_entropy(std::span<const Real> pred, std::size_t target) {
  if (target >= pred.size()) {
    throw std::out_of_range("cross_entropy target " + std::to_string(target) +
                            " out of range for dimension " +
                            std::to_string(pred.size()));
  }
  const Real p = std::max(pred[target], static_cast<Real>(kLogClamp));
  return -std::log(p);
}

template <typename Real>
Real cross_entropy(const ProbVector<Real>& pred, std::size_t target) {
  return cross_entropy<Real>(pred.values(), target);
}

template <typename Real>
void sgd_update(Tensor<Real>& param, const Tensor<Real>& grad, double lr,
                double clip) {
  if (!param.same_shape(grad)) throw std::invalid_argument("sgd dims mismatch");
  if (!(lr >= 0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(clip > 0)) throw std::invalid_argument("clip must be positive");
  const Real c = static_cast<Real>(clip);
  const Real step = static_cast<Real>(lr);
  auto p = param.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] -= step * std::clamp(g[i], -c, c);
  }
}

template <typename Real>
void sgd_update_rows(Tensor<Real>& param, const Tensor<Real>& grad,
                     std::span<const std::size_t> rows, double lr,
                     double clip) {
  if (!param.same_shape(grad) || param.rank() != 2) {
    throw std::invalid_argument("sgd dims mismatch");
  }
  const Real c = static_cast<Real>(clip);
  const Real step = static_cast<Real>(lr);
  for (std::size_t r : rows) {
    auto p = param.row(r);
    auto g = grad.row(r);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= step * std::clamp(g[i], -c, c);
    }
  }
}

template <typename Real>
Tensor<Real> sgd_step(const Tensor<Real>& param, const Tensor<Real>& grad,
                      double lr, double clip) {
  Tensor<Real> out = param;
  sgd_update(out, grad, lr, clip);
  return out;
}

double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Tensor<double>* const> params,
                         std::span<const Tensor<double>* const> analytic_grads,
                         double eps) {
  if (params.size() != analytic_grads.size()) {
    throw std::invalid_argument("params/gradients count mismatch");
  }
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw std::invalid_argument("eps must lie in [1e-6, 1e-3]");
  }
  double max_rel = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double>& p = *params[t];
    const Tensor<double>& g = *analytic_grads[t];
    if (!p.same_shape(g)) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double plus = loss_fn();
      p[i] = saved - eps;
      const double minus = loss_fn();
      p[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw std::domain_error("loss function returned a non-finite value");
      }
      const double numeric = (plus - minus) / (2 * eps);
      const double analytic = g[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

namespace linalg {

template <typename Real>
void matvec(std::span<const Real> m, std::size_t rows, std::size_t cols,
            std::span<const Real> x, std::span<Real> y) {
  Eigen::Map<const RowMajor<Real>> mat(m.data(), rows, cols);
  Eigen::Map<const ColVector<Real>> in(x.data(), cols);
  Eigen::Map<ColVector<Real>> out(y.data(), rows);
  out.noalias() = mat * in;
}

template <typename Real>
void matvec_transposed_add(std::span<const Real> m, std::size_t rows,
                           std::size_t cols, std::span<const Real> x,
                           std::span<Real> y) {
  Eigen::Map<const RowMajor<Real>> mat(m.data(), rows, cols);
  Eigen::Map<const ColVector<Real>> in(x.data(), rows);
  Eigen::Map<ColVector<Real>> out(y.data(), cols);
  out.noalias() += mat.transpose() * in;
}

template <typename Real>
void add_outer(std::span<Real> m, std::size_t rows, std::size_t cols,
               std::span<const Real> a, std::span<const Real> b) {
  Eigen::Map<RowMajor<Real>> mat(m.data(), rows, cols);
  Eigen::Map<const ColVector<Real>> left(a.data(), rows);
  Eigen::Map<const ColVector<Real>> right(b.data(), cols);
  mat.noalias() += left * right.transpose();
}

}  // namespace linalg

#define RCLM_INSTANTIATE(Real)                                                 \
  template class Tensor<Real>;                                                 \
  template class ProbVector<Real>;                                             \
  template ProbVector<Real> softmax<Real>(std::span<const Real>);              \
  template void softmax_inplace<Real>(std::span<Real>);                        \
  template Real cross_entropy<Real>(const ProbVector<Real>&, std::size_t);     \
  template Real cross_entropy<Real>(std::span<const Real>, std::size_t);       \
  template Tensor<Real> sgd_step<Real>(const Tensor<Real>&,                    \
                                       const Tensor<Real>&, double, double);   \
  template void sgd_update<Real>(Tensor<Real>&, const Tensor<Real>&, double,   \
                                 double);                                      \
  template void sgd_update_rows<Real>(Tensor<Real>&, const Tensor<Real>&,      \
                                      std::span<const std::size_t>, double,    \
                                      double);                                 \
  template void linalg::matvec<Real>(std::span<const Real>, std::size_t,       \
                                     std::size_t, std::span<const Real>,       \
                                     std::span<Real>);                         \
  template void linalg::matvec_transposed_add<Real>(                           \
      std::span<const Real>, std::size_t, std::size_t, std::span<const Real>,  \
      std::span<Real>);                                                        \
  template void linalg::add_outer<Real>(std::span<Real>, std::size_t,          \
                                        std::size_t, std::span<const Real>,    \
                                        std::span<const Real>);

RCLM_INSTANTIATE(float)
RCLM_INSTANTIATE(double)

#undef RCLM_INSTANTIATE

}  // namespace rclm

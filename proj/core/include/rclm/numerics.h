#ifndef RCLM_NUMERICS_H_
#define RCLM_NUMERICS_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace rclm {

// Standard precision (float) is used for training; high precision (double)
// is required for gradient checking.
enum class Precision { kStandard, kHigh };

template <typename Real>
inline constexpr Precision kPrecisionOf =
    std::is_same_v<Real, double> ? Precision::kHigh : Precision::kStandard;

// Tolerance on |sum - 1| for a probability vector of the given precision.
template <typename Real>
inline constexpr double kProbSumTolerance =
    kPrecisionOf<Real> == Precision::kHigh ? 1e-9 : 1e-5;

inline constexpr double kDefaultClip = 5.0;
inline constexpr double kLogClamp = 1e-12;

// Dense row-major tensor. product(dims) == data.size() always holds.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, Real fill = Real(0));
  Tensor(std::vector<std::size_t> dims, std::vector<Real> data);

  static constexpr Precision precision() { return kPrecisionOf<Real>; }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const { return dims_.at(0); }
  std::size_t cols() const { return dims_.size() > 1 ? dims_[1] : 1; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<Real> row(std::size_t r) {
    return std::span<Real>(data_).subspan(r * cols(), cols());
  }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  void fill(Real v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(dims_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<Real> data_;
};

// Non-negative vector summing to one within kProbSumTolerance<Real>.
template <typename Real>
class ProbVector {
 public:
  ProbVector() = default;
  // Validates the simplex invariant; throws std::invalid_argument otherwise.
  explicit ProbVector(std::vector<Real> values);

  std::size_t dimension() const { return values_.size(); }
  Real operator[](std::size_t i) const { return values_[i]; }
  std::span<const Real> values() const { return values_; }
  std::size_t argmax() const;

 private:
  struct Unchecked {};
  ProbVector(Unchecked, std::vector<Real> values) : values_(std::move(values)) {}
  template <typename R>
  friend ProbVector<R> softmax(std::span<const R> logits);

  std::vector<Real> values_;
};

// exp(v_i - max v) / sum_j exp(v_j - max v).
// Throws std::invalid_argument on empty input, std::domain_error on
// non-finite entries.
template <typename Real>
ProbVector<Real> softmax(std::span<const Real> logits);

// In-place variant used on hot paths; no validation.
template <typename Real>
void softmax_inplace(std::span<Real> v);

// -ln(max(pred[target], 1e-12)).
template <typename Real>
Real cross_entropy(const ProbVector<Real>& pred, std::size_t target);
template <typename Real>
Real cross_entropy(std::span<const Real> pred, std::size_t target);

// param - lr * clip(grad, [-clip, clip]).
template <typename Real>
Tensor<Real> sgd_step(const Tensor<Real>& param, const Tensor<Real>& grad,
                      double lr, double clip = kDefaultClip);
template <typename Real>
void sgd_update(Tensor<Real>& param, const Tensor<Real>& grad, double lr,
                double clip = kDefaultClip);
// Same update restricted to the given rows of a rank-2 tensor.
template <typename Real>
void sgd_update_rows(Tensor<Real>& param, const Tensor<Real>& grad,
                     std::span<const std::size_t> rows, double lr,
                     double clip = kDefaultClip);

// Central-difference gradient check. Each scalar of each tensor in `params`
// is perturbed in place by +/- eps and restored. Returns the maximum over all
// scalars of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws std::domain_error if loss_fn returns a non-finite value.
double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Tensor<double>* const> params,
                         std::span<const Tensor<double>* const> analytic_grads,
                         double eps = 1e-5);

// Dense kernels over row-major matrices of shape rows x cols.
namespace linalg {

// y = M x
template <typename Real>
void matvec(std::span<const Real> m, std::size_t rows, std::size_t cols,
            std::span<const Real> x, std::span<Real> y);
// y += M^T x
template <typename Real>
void matvec_transposed_add(std::span<const Real> m, std::size_t rows,
                           std::size_t cols, std::span<const Real> x,
                           std::span<Real> y);
// M += a b^T
template <typename Real>
void add_outer(std::span<Real> m, std::size_t rows, std::size_t cols,
               std::span<const Real> a, std::span<const Real> b);

}  // namespace linalg

}  // namespace rclm

#endif  // RCLM_NUMERICS_H_

#pragma once

#include <stdexcept>
#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gopo {

/// Raised when a loss, gradient or policy output stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat view of every trainable scalar of a network. The layout is the list of
/// layer sizes; each layer stores its weight matrix (row-major, out x in)
/// followed by its bias vector.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::vector<std::size_t> layout, std::vector<double> values);

  static ParameterVector zeros(std::vector<std::size_t> layout);
  static std::size_t count_for(const std::vector<std::size_t>& layout);

  const std::vector<std::size_t>& layout() const noexcept { return layout_; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool same_layout(const ParameterVector& other) const noexcept { return layout_ == other.layout_; }
  ParameterVector& operator+=(const ParameterVector& other);
  ParameterVector& operator*=(double s);
  double norm() const;
  bool all_finite() const;

  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<std::size_t> layout_;
  std::vector<double> values_;
};

/// Scales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ParameterVector& grad, double max_norm);

enum class Head { kLinear, kSoftmax };

/// Dense feed-forward network with tanh hidden layers.
class Mlp {
 public:
  /// Intermediate activations of one forward pass, reused by backward.
  struct Tape {
    std::vector<Eigen::VectorXd> activations;  // input, then each hidden layer
    Eigen::VectorXd logits;
  };

  Mlp() = default;
  Mlp(std::vector<std::size_t> sizes, Head head);  // all parameters zero

  /// Glorot-uniform weights, zero biases.
  static Mlp random(std::vector<std::size_t> sizes, Head head, std::mt19937_64& rng);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  Head head() const noexcept { return head_; }

  const ParameterVector& parameters() const noexcept { return params_; }
  ParameterVector& parameters() noexcept { return params_; }
  void set_parameters(ParameterVector p);

  /// Probabilities for a softmax head, raw outputs for a linear head.
  std::vector<double> forward(std::span<const double> x) const;

  Tape record(std::span<const double> x) const;

  /// Adds dL/dtheta to `grad` given dL/dlogits for the taped pass.
  void accumulate_logit_gradient(const Tape& tape, std::span<const double> dlogits,
                                 ParameterVector& grad) const;

  /// Gradient of the loss whose derivative with respect to forward(x) is
  /// `upstream`; for a softmax head this chains through the softmax Jacobian.
  ParameterVector backward(std::span<const double> x, std::span<const double> upstream) const;

  /// Sum of per-sample gradients.
  ParameterVector backward_batch(const std::vector<std::vector<double>>& xs,
                                 const std::vector<std::vector<double>>& upstreams) const;

  bool operator==(const Mlp&) const = default;

 private:
  void check_input(std::span<const double> x) const;

  std::vector<std::size_t> sizes_;
  Head head_ = Head::kLinear;
  ParameterVector params_;
};

/// Numerically stable softmax (max subtraction).
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct AdamState {
  ParameterVector m;
  ParameterVector v;
  long step = 0;

  static AdamState for_parameters(const ParameterVector& p);
  bool operator==(const AdamState&) const = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update. Throws InputError on layout mismatch.
void adam_step(ParameterVector& params, const ParameterVector& grad, AdamState& state, double lr);

// Versioned text checkpoint; doubles are written as hex floats so a reload is
// bit-exact.
void save_checkpoint(std::ostream& out, const Mlp& net, const AdamState& opt);
void load_checkpoint(std::istream& in, Mlp& net, AdamState& opt);

}  // namespace gopo

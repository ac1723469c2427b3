#include "gopo/neural.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "gopo/core.hpp"

namespace gopo {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::size_t ParameterVector::count_for(const std::vector<std::size_t>& layout) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layout.size(); ++l) n += layout[l + 1] * (layout[l] + 1);
  return n;
}

ParameterVector::ParameterVector(std::vector<std::size_t> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != count_for(layout_)) {
    throw InputError("parameter count " + std::to_string(values_.size()) + " does not match layout (" +
                     std::to_string(count_for(layout_)) + ")");
  }
}

ParameterVector ParameterVector::zeros(std::vector<std::size_t> layout) {
  const std::size_t n = count_for(layout);
  return ParameterVector(std::move(layout), std::vector<double>(n, 0.0));
}

ParameterVector& ParameterVector::operator+=(const ParameterVector& other) {
  if (!same_layout(other)) throw InputError("parameter layout mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParameterVector& ParameterVector::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

double ParameterVector::norm() const {
  double ss = 0.0;
  for (double v : values_) ss += v * v;
  return std::sqrt(ss);
}

bool ParameterVector::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double clip_global_norm(ParameterVector& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
  return n;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

Mlp::Mlp(std::vector<std::size_t> sizes, Head head) : sizes_(std::move(sizes)), head_(head) {
  if (sizes_.size() < 2) throw InputError("an MLP needs at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw InputError("layer sizes must be positive");
  }
  params_ = ParameterVector::zeros(sizes_);
}

Mlp Mlp::random(std::vector<std::size_t> sizes, Head head, std::mt19937_64& rng) {
  Mlp net(std::move(sizes), head);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
    const std::size_t in = net.sizes_[l];
    const std::size_t out = net.sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) net.params_[offset + i] = limit * unit(rng);
    offset += out * (in + 1);
  }
  return net;
}

void Mlp::set_parameters(ParameterVector p) {
  if (p.layout() != sizes_) throw InputError("parameter layout does not match network");
  params_ = std::move(p);
}

void Mlp::check_input(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw InputError("input size " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(input_size()));
  }
}

Mlp::Tape Mlp::record(std::span<const double> x) const {
  check_input(x);
  Tape tape;
  tape.activations.reserve(sizes_.size() - 1);
  tape.activations.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size())));

  const double* p = params_.values().data();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<long>(sizes_[l]);
    const auto out = static_cast<long>(sizes_[l + 1]);
    RowMajorMap w(p, out, in);
    Eigen::Map<const Eigen::VectorXd> b(p + out * in, out);
    Eigen::VectorXd z = w * tape.activations.back() + b;
    p += out * (in + 1);
    if (l + 2 == sizes_.size()) {
      tape.logits = std::move(z);
    } else {
      tape.activations.emplace_back(z.array().tanh());
    }
  }
  return tape;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  const Tape tape = record(x);
  const Eigen::VectorXd out = head_ == Head::kSoftmax ? softmax(tape.logits) : tape.logits;
  return {out.data(), out.data() + out.size()};
}

void Mlp::accumulate_logit_gradient(const Tape& tape, std::span<const double> dlogits,
                                    ParameterVector& grad) const {
  if (dlogits.size() != output_size()) throw InputError("upstream gradient size mismatch");
  if (!grad.same_layout(params_)) throw InputError("gradient layout does not match network");

  std::vector<std::size_t> offsets(sizes_.size() - 1, 0);
  for (std::size_t l = 1; l < offsets.size(); ++l) offsets[l] = offsets[l - 1] + sizes_[l] * (sizes_[l - 1] + 1);

  Eigen::VectorXd delta = Eigen::Map<const Eigen::VectorXd>(dlogits.data(), static_cast<long>(dlogits.size()));
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const auto in = static_cast<long>(sizes_[l]);
    const auto out = static_cast<long>(sizes_[l + 1]);
    const Eigen::VectorXd& a = tape.activations[l];
    double* g = grad.values().data() + offsets[l];
    RowMajorMutMap(g, out, in).noalias() += delta * a.transpose();
    Eigen::Map<Eigen::VectorXd>(g + out * in, out) += delta;
    if (l == 0) break;
    RowMajorMap w(params_.values().data() + offsets[l], out, in);
    delta = (w.transpose() * delta).array() * (1.0 - a.array().square());
  }
}

ParameterVector Mlp::backward(std::span<const double> x, std::span<const double> upstream) const {
  if (upstream.size() != output_size()) throw InputError("upstream gradient size mismatch");
  const Tape tape = record(x);
  Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(upstream.data(), static_cast<long>(upstream.size()));
  if (head_ == Head::kSoftmax) {
    const Eigen::VectorXd p = softmax(tape.logits);
    g = p.array() * (g.array() - p.dot(g));
  }
  ParameterVector grad = ParameterVector::zeros(sizes_);
  accumulate_logit_gradient(tape, {g.data(), static_cast<std::size_t>(g.size())}, grad);
  return grad;
}

ParameterVector Mlp::backward_batch(const std::vector<std::vector<double>>& xs,
                                    const std::vector<std::vector<double>>& upstreams) const {
  if (xs.size() != upstreams.size()) throw InputError("batch and upstream sizes differ");
  ParameterVector grad = ParameterVector::zeros(sizes_);
  for (std::size_t i = 0; i < xs.size(); ++i) grad += backward(xs[i], upstreams[i]);
  return grad;
}

AdamState AdamState::for_parameters(const ParameterVector& p) {
  return {ParameterVector::zeros(p.layout()), ParameterVector::zeros(p.layout()), 0};
}

void adam_step(ParameterVector& params, const ParameterVector& grad, AdamState& state, double lr) {
  if (!params.same_layout(grad) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw InputError("adam: parameter, gradient and state layouts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + kAdamEps);
  }
}

namespace {

constexpr const char* kCheckpointMagic = "gopo-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_values(std::ostream& out, const std::vector<double>& values) {
  char buf[64];
  for (double v : values) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
    out.write(buf, end - buf);
    out.put('\n');
  }
}

std::vector<double> read_values(std::istream& in, std::size_t n) {
  std::vector<double> values(n);
  std::string token;
  for (double& v : values) {
    if (!(in >> token)) throw InputError("checkpoint truncated");
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v, std::chars_format::hex);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      throw InputError("checkpoint value '" + token + "' is not a hex float");
    }
  }
  return values;
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) throw InputError("checkpoint: expected '" + word + "', got '" + got + "'");
}

}  // namespace

void save_checkpoint(std::ostream& out, const Mlp& net, const AdamState& opt) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "head " << (net.head() == Head::kSoftmax ? "softmax" : "linear") << '\n';
  out << "sizes " << net.sizes().size();
  for (std::size_t s : net.sizes()) out << ' ' << s;
  out << "\nparams " << net.parameters().size() << '\n';
  write_values(out, net.parameters().values());
  out << "adam " << opt.step << '\n';
  write_values(out, opt.m.values());
  write_values(out, opt.v.values());
}

void load_checkpoint(std::istream& in, Mlp& net, AdamState& opt) {
  expect(in, kCheckpointMagic);
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion) throw InputError("unsupported checkpoint version");
  expect(in, "head");
  std::string head;
  in >> head;
  if (head != "softmax" && head != "linear") throw InputError("checkpoint: unknown head '" + head + "'");
  expect(in, "sizes");
  std::size_t n_layers = 0;
  in >> n_layers;
  std::vector<std::size_t> sizes(n_layers);
  for (auto& s : sizes) in >> s;
  if (!in) throw InputError("checkpoint: malformed layer sizes");
  expect(in, "params");
  std::size_t n = 0;
  in >> n;
  if (n != ParameterVector::count_for(sizes)) throw InputError("checkpoint: parameter count mismatch");

  Mlp loaded(sizes, head == "softmax" ? Head::kSoftmax : Head::kLinear);
  loaded.set_parameters(ParameterVector(sizes, read_values(in, n)));
  expect(in, "adam");
  AdamState state;
  in >> state.step;
  state.m = ParameterVector(sizes, read_values(in, n));
  state.v = ParameterVector(sizes, read_values(in, n));
  net = std::move(loaded);
  opt = std::move(state);
}

}  // namespace gopo

#include "fedsim/model.hpp"

#include <cmath>
#include <string>

namespace fedsim {

namespace {

void check_input_width(const MlpModel& model, const Eigen::Ref<const Matrix>& x) {
  if (x.cols() != model.input_dim()) {
    throw DimensionError("forward: input width " + std::to_string(x.cols()) + " vs model n_0 " +
                         std::to_string(model.input_dim()));
  }
}

void check_bounds_shape(const MlpModel& model, const BoundSet& bounds) {
  for (const auto& [l, z] : bounds.bounds) {
    if (l < 1 || l > model.num_hidden()) {
      throw DimensionError("bounds: layer index " + std::to_string(l) + " outside 1.." +
                           std::to_string(model.num_hidden()));
    }
    if (z.size() != model.layer_width(l)) {
      throw DimensionError("bounds: layer " + std::to_string(l) + " width " +
                           std::to_string(z.size()) + " vs model " +
                           std::to_string(model.layer_width(l)));
    }
  }
}

Matrix affine(const DenseLayer& layer, const Eigen::Ref<const Matrix>& input) {
  return (input * layer.W.transpose()).rowwise() + layer.b.transpose();
}

}  // namespace

MlpModel make_mlp(int prototype_id, int input_dim, const std::vector<int>& hidden_widths,
                  int classes, Rng& rng) {
  if (hidden_widths.empty()) throw ConfigError("make_mlp: at least one hidden layer required");
  if (classes < 2) throw ConfigError("make_mlp: need C >= 2");
  MlpModel m;
  m.prototype_id = prototype_id;
  int in = input_dim;
  for (int width : hidden_widths) {
    DenseLayer layer;
    layer.W.resize(width, in);
    double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = scale * rng.normal();
    layer.b = Vector::Zero(width);
    m.hidden.push_back(std::move(layer));
    in = width;
  }
  m.head.W.resize(classes, in);
  double scale = std::sqrt(2.0 / static_cast<double>(in));
  for (Eigen::Index i = 0; i < m.head.W.rows(); ++i)
    for (Eigen::Index j = 0; j < m.head.W.cols(); ++j) m.head.W(i, j) = scale * rng.normal();
  m.head.b = Vector::Zero(classes);
  return m;
}

Matrix forward(const MlpModel& model, const Eigen::Ref<const Matrix>& x) {
  check_input_width(model, x);
  Matrix h = x;
  for (const auto& layer : model.hidden) {
    h = affine(layer, h).cwiseMax(0.0);
  }
  return affine(model.head, h);
}

std::pair<Matrix, ForwardTrace> forward_bounded(const MlpModel& model, const BoundSet& bounds,
                                                const Eigen::Ref<const Matrix>& x) {
  check_input_width(model, x);
  check_bounds_shape(model, bounds);
  ForwardTrace trace;
  const int L = model.num_hidden();
  trace.pre.resize(static_cast<std::size_t>(L));
  trace.post_relu.resize(static_cast<std::size_t>(L));
  trace.post_clamp.resize(static_cast<std::size_t>(L));
  trace.clamp_mask.resize(static_cast<std::size_t>(L));

  Matrix h = x;
  for (int l = 1; l <= L; ++l) {
    std::size_t idx = static_cast<std::size_t>(l - 1);
    trace.pre[idx] = affine(model.hidden[idx], h);
    trace.post_relu[idx] = trace.pre[idx].cwiseMax(0.0);
    auto it = bounds.bounds.find(l);
    if (it != bounds.bounds.end()) {
      const Vector& z = it->second;
      Matrix zt = z.transpose().replicate(trace.post_relu[idx].rows(), 1);
      trace.clamp_mask[idx] = zt.array() < trace.post_relu[idx].array();
      trace.post_clamp[idx] = trace.post_relu[idx].cwiseMin(zt);
    } else {
      trace.post_clamp[idx] = trace.post_relu[idx];
      trace.clamp_mask[idx] = BoolArray::Constant(trace.post_relu[idx].rows(),
                                                  trace.post_relu[idx].cols(), false);
    }
    h = trace.post_clamp[idx];
  }
  trace.logits = affine(model.head, h);
  return {trace.logits, trace};
}

namespace {

// Shared backprop from d(loss)/d(logits); bounds empty for the plain model.
ParamGrads backprop_params(const MlpModel& model, const Eigen::Ref<const Matrix>& x,
                           const ForwardTrace& trace, const Matrix& dlogits) {
  ParamGrads g;
  const int L = model.num_hidden();
  g.hidden.resize(static_cast<std::size_t>(L));

  const Matrix& head_in = trace.post_clamp[static_cast<std::size_t>(L - 1)];
  g.head.W = dlogits.transpose() * head_in;
  g.head.b = dlogits.colwise().sum().transpose();

  Matrix dh = dlogits * model.head.W;  // gradient w.r.t. post_clamp of layer L
  for (int l = L; l >= 1; --l) {
    std::size_t idx = static_cast<std::size_t>(l - 1);
    // Clamp passes gradient to the activation only where it is inactive.
    Matrix d_relu = (trace.clamp_mask[idx]).select(Matrix::Zero(dh.rows(), dh.cols()), dh);
    Matrix d_pre = (trace.pre[idx].array() > 0.0).select(d_relu, Matrix::Zero(dh.rows(), dh.cols()));
    const Matrix& input = (l == 1) ? Matrix(x) : trace.post_clamp[idx - 1];
    g.hidden[idx].W = d_pre.transpose() * input;
    g.hidden[idx].b = d_pre.colwise().sum().transpose();
    if (l > 1) dh = d_pre * model.hidden[idx].W;
  }
  return g;
}

}  // namespace

ParamGrads backward_params(const MlpModel& model, const Eigen::Ref<const Matrix>& x,
                           const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw DimensionError("backward_params: label count vs batch size");
  }
  auto [logits, trace] = forward_bounded(model, BoundSet{}, x);
  Matrix p = softmax(logits);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= p.cols()) {
      throw std::out_of_range("backward_params: label out of range");
    }
    p(i, y) -= 1.0;
  }
  p /= static_cast<double>(x.rows());
  return backprop_params(model, x, trace, p);
}

ParamGrads backward_params_soft(const MlpModel& model, const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& target_probs) {
  if (target_probs.rows() != x.rows() || target_probs.cols() != model.num_classes()) {
    throw DimensionError("backward_params_soft: target shape mismatch");
  }
  auto [logits, trace] = forward_bounded(model, BoundSet{}, x);
  Matrix dlogits = (softmax(logits) - target_probs) / static_cast<double>(x.rows());
  return backprop_params(model, x, trace, dlogits);
}

std::map<int, Vector> backward_bounds(const MlpModel& model, const BoundSet& bounds,
                                      const Eigen::Ref<const Matrix>& x,
                                      const Eigen::Ref<const Matrix>& target_logits,
                                      double lambda) {
  auto [logits, trace] = forward_bounded(model, bounds, x);
  if (target_logits.rows() != logits.rows() || target_logits.cols() != logits.cols()) {
    throw DimensionError("backward_bounds: target_logits shape mismatch");
  }
  const double denom = static_cast<double>(logits.rows()) * static_cast<double>(logits.cols());
  Matrix dlogits = 2.0 * (logits - target_logits) / denom;

  std::map<int, Vector> grads;
  const int L = model.num_hidden();
  Matrix dh = dlogits * model.head.W;
  for (int l = L; l >= 1; --l) {
    std::size_t idx = static_cast<std::size_t>(l - 1);
    auto it = bounds.bounds.find(l);
    if (it != bounds.bounds.end()) {
      const Vector& z = it->second;
      // Where the clamp is active the output is z_l, so its gradient is the
      // full incoming gradient; elsewhere it flows to the activation.
      Matrix to_z = (trace.clamp_mask[idx]).select(dh, Matrix::Zero(dh.rows(), dh.cols()));
      Vector gz = to_z.colwise().sum().transpose();
      double zn = std::max(z.norm(), 1e-12);
      gz += lambda * z / zn;
      grads[l] = std::move(gz);
      dh = (trace.clamp_mask[idx]).select(Matrix::Zero(dh.rows(), dh.cols()), dh);
    }
    Matrix d_pre = (trace.pre[idx].array() > 0.0).select(dh, Matrix::Zero(dh.rows(), dh.cols()));
    if (l > 1) dh = d_pre * model.hidden[idx].W;
  }
  return grads;
}

void sgd_step(MlpModel& model, const ParamGrads& grads, double lr) {
  if (grads.hidden.size() != model.hidden.size()) {
    throw DimensionError("sgd_step: gradient layer count mismatch");
  }
  for (std::size_t i = 0; i < model.hidden.size(); ++i) {
    model.hidden[i].W -= lr * grads.hidden[i].W;
    model.hidden[i].b -= lr * grads.hidden[i].b;
  }
  model.head.W -= lr * grads.head.W;
  model.head.b -= lr * grads.head.b;
}

void sgd_step(BoundSet& bounds, const std::map<int, Vector>& grads, double lr) {
  for (const auto& [l, g] : grads) {
    auto it = bounds.bounds.find(l);
    if (it == bounds.bounds.end()) throw DimensionError("sgd_step: no bound for layer " + std::to_string(l));
    if (it->second.size() != g.size()) throw DimensionError("sgd_step: bound gradient width mismatch");
    it->second -= lr * g;
    it->second = it->second.cwiseMax(0.0);
  }
}

Eigen::Index param_count(const MlpModel& model) {
  Eigen::Index n = 0;
  for (const auto& layer : model.hidden) n += layer.W.size() + layer.b.size();
  return n + model.head.W.size() + model.head.b.size();
}

Vector flatten_params(const MlpModel& model) {
  Vector flat(param_count(model));
  Eigen::Index pos = 0;
  auto put = [&](const DenseLayer& layer) {
    flat.segment(pos, layer.W.size()) = Eigen::Map<const Vector>(layer.W.data(), layer.W.size());
    pos += layer.W.size();
    flat.segment(pos, layer.b.size()) = layer.b;
    pos += layer.b.size();
  };
  for (const auto& layer : model.hidden) put(layer);
  put(model.head);
  return flat;
}

MlpModel unflatten_params(const Vector& flat, const MlpModel& reference) {
  if (flat.size() != param_count(reference)) {
    throw DimensionError("unflatten_params: length " + std::to_string(flat.size()) + " vs " +
                         std::to_string(param_count(reference)));
  }
  MlpModel m = reference;
  Eigen::Index pos = 0;
  auto take = [&](DenseLayer& layer) {
    Eigen::Map<Vector>(layer.W.data(), layer.W.size()) = flat.segment(pos, layer.W.size());
    pos += layer.W.size();
    layer.b = flat.segment(pos, layer.b.size());
    pos += layer.b.size();
  };
  for (auto& layer : m.hidden) take(layer);
  take(m.head);
  return m;
}

}  // namespace fedsim

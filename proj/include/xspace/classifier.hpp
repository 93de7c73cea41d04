#pragma once

#include <cmath>
#include <concepts>
#include <span>

#include "xspace/model.hpp"
#include "xspace/space.hpp"

namespace xspace {

/// What attribution methods and metrics need from a classifier: evaluation
/// of the target head, input gradients, and the two modified backward passes.
template <class C>
concept DifferentiableClassifier = requires(const C& m, std::span<const double> z, std::size_t c, double d) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.num_classes() } -> std::convertible_to<std::size_t>;
  { m.predict(z) } -> std::convertible_to<Vec>;
  { m.value(z, c) } -> std::convertible_to<double>;
  { m.gradient(z, c) } -> std::convertible_to<Vec>;
  { m.guided_gradient(z, c) } -> std::convertible_to<Vec>;
  { m.deeplift_multipliers(z, z, c, d) } -> std::convertible_to<Vec>;
};

namespace detail {

// DeepLIFT cotangent on the logits: a one-hot for the logit head, the path
// average of the softmax Jacobian row for the probability head.
inline Vec deeplift_head(std::span<const double> logits, std::span<const double> ref_logits, std::size_t c,
                         Head head) {
  if (head == Head::logit) return head_cotangent(logits, c, head);
  Vec u = softmax_path_gradient(logits, ref_logits, c);
  // Quadrature leaves a residual on very steep paths; fold it back so the
  // multipliers reproduce delta p_c exactly.
  double projected = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) projected += u[j] * (logits[j] - ref_logits[j]);
  const double target = softmax(logits)[c] - softmax(ref_logits)[c];
  if (projected != 0.0) {
    const double ratio = target / projected;
    if (ratio > 0.5 && ratio < 2.0) {
      for (double& v : u) v *= ratio;
    }
  }
  return u;
}

}  // namespace detail

/// The base model seen directly on the time domain.
class ModelClassifier {
 public:
  explicit ModelClassifier(const Model& model, Head head = Head::probability) : model_(&model), head_(head) {}

  const Model& model() const noexcept { return *model_; }
  Head head() const noexcept { return head_; }
  std::size_t dim() const noexcept { return model_->input_len(); }
  std::size_t num_classes() const noexcept { return model_->num_classes(); }

  Vec predict(std::span<const double> x) const { return model_->predict(x); }

  double value(std::span<const double> x, std::size_t c) const {
    return head_value(model_->logits(x), check_class(c), head_);
  }

  Vec gradient(std::span<const double> x, std::size_t c) const { return backprop(x, c, BackwardRule::gradient); }
  Vec guided_gradient(std::span<const double> x, std::size_t c) const {
    return backprop(x, c, BackwardRule::guided);
  }

  Vec deeplift_multipliers(std::span<const double> x, std::span<const double> ref, std::size_t c,
                           double delta) const {
    check_class(c);
    require_length(ref.size(), x.size(), "deeplift baseline");
    const Trace t = model_->trace(x);
    const Trace r = model_->trace(ref);
    const Vec u = detail::deeplift_head(t.logits(), r.logits(), c, head_);
    return model_->backward(t, u, BackwardRule::rescale, &r, delta);
  }

 private:
  std::size_t check_class(std::size_t c) const {
    require(c < model_->num_classes(), Errc::invalid_params, "class index out of range");
    return c;
  }

  Vec backprop(std::span<const double> x, std::size_t c, BackwardRule rule) const {
    check_class(c);
    const Trace t = model_->trace(x);
    detail::check_finite(t.logits(), "Model::backward");
    return model_->backward(t, head_cotangent(t.logits(), c, head_), rule);
  }

  const Model* model_;
  Head head_;
};

/// M'(z) = M(F^-1(z)). Gradients and DeepLIFT multipliers pull back through
/// the linear inverse operator by its transpose.
class WrappedClassifier {
 public:
  WrappedClassifier(const Model& model, Space space, Head head = Head::probability)
      : base_(model, head), space_(std::move(space)) {
    require(space_.input_len() == model.input_len(), Errc::length_mismatch,
            "space input_len " + std::to_string(space_.input_len()) + " differs from model input_len " +
                std::to_string(model.input_len()));
  }

  const Model& model() const noexcept { return base_.model(); }
  const Space& space() const noexcept { return space_; }
  Head head() const noexcept { return base_.head(); }
  std::size_t dim() const noexcept { return space_.dim(); }
  std::size_t num_classes() const noexcept { return base_.num_classes(); }

  Vec predict(std::span<const double> z) const { return base_.predict(space_.inverse(z)); }
  double value(std::span<const double> z, std::size_t c) const { return base_.value(space_.inverse(z), c); }

  Vec gradient(std::span<const double> z, std::size_t c) const {
    return space_.pullback(base_.gradient(space_.inverse(z), c));
  }
  Vec guided_gradient(std::span<const double> z, std::size_t c) const {
    return space_.pullback(base_.guided_gradient(space_.inverse(z), c));
  }
  Vec deeplift_multipliers(std::span<const double> z, std::span<const double> ref, std::size_t c,
                           double delta) const {
    require_length(ref.size(), z.size(), "deeplift baseline");
    return space_.pullback(base_.deeplift_multipliers(space_.inverse(z), space_.inverse(ref), c, delta));
  }

 private:
  ModelClassifier base_;
  Space space_;
};

inline WrappedClassifier wrap(const Model& model, const Space& space, Head head = Head::probability) {
  return WrappedClassifier(model, space, head);
}

}  // namespace xspace

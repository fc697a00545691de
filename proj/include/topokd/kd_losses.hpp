#pragma once

#include <cmath>
#include <span>

#include "topokd/losses.hpp"
#include "topokd/mixup.hpp"

namespace topokd::distill {

using nn::LossGrad;
using nn::Tensor;

/// softmax(logits / temperature), row-wise.
inline Tensor tempered_softmax(const Tensor& logits, double temperature) { return nn::softmax(logits, temperature); }

/// (T^2 / n) * sum_i KL(softmax(t_i / T) || softmax(s_i / T)), teacher first.
/// The gradient is with respect to the student logits: (T / n) * (p_s - p_t).
inline LossGrad kd_kl_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  if (teacher_logits.shape() != student_logits.shape()) throw ShapeError("kd_kl_loss: teacher and student logits differ in shape");
  const Tensor lt = nn::log_softmax(teacher_logits, temperature);
  const Tensor ls = nn::log_softmax(student_logits, temperature);
  const std::size_t n = lt.dim(0), k = lt.dim(1);
  const double scale = temperature * temperature / static_cast<double>(n);
  const double gscale = temperature / static_cast<double>(n);
  LossGrad out{0.0, Tensor(student_logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t idx = i * k + c;
      const double pt = std::exp(lt[idx]);
      const double ps = std::exp(ls[idx]);
      total += pt * (lt[idx] - ls[idx]);
      out.grad[idx] = gscale * (ps - pt);
    }
  out.loss = scale * total;
  return out;
}

/// (1 - tau) * CE(student, labels) + tau * kd_kl_loss(teacher, student).
inline LossGrad kd_total_loss(const Tensor& student_logits, std::span<const int> labels, const Tensor& teacher_logits,
                              double tau, double temperature) {
  return nn::combine(1.0 - tau, nn::cross_entropy(student_logits, labels), tau,
                     kd_kl_loss(teacher_logits, student_logits, temperature));
}

/// Mixup form: the cross-entropy term is the mixup cross-entropy of `mixed`,
/// the teacher logits are the teacher's response to the mixed inputs.
inline LossGrad kd_total_loss(const Tensor& student_logits, const augment::MixedBatch& mixed,
                              const Tensor& teacher_logits, double tau, double temperature) {
  return nn::combine(1.0 - tau, augment::mixup_ce_loss(student_logits, mixed), tau,
                     kd_kl_loss(teacher_logits, student_logits, temperature));
}

/// eta * KD(teacher1, student) + (1 - eta) * KD(teacher2, student).
inline LossGrad multi_teacher_kd_loss(const Tensor& t1_logits, const Tensor& t2_logits, const Tensor& student_logits,
                                      double eta, double temperature) {
  return nn::combine(eta, kd_kl_loss(t1_logits, student_logits, temperature), 1.0 - eta,
                     kd_kl_loss(t2_logits, student_logits, temperature));
}

/// Two-teacher total objective: (1 - tau) * CE + tau * multi_teacher_kd_loss.
inline LossGrad multi_teacher_total_loss(const Tensor& student_logits, std::span<const int> labels, const Tensor& t1_logits,
                                         const Tensor& t2_logits, double tau, double eta, double temperature) {
  return nn::combine(1.0 - tau, nn::cross_entropy(student_logits, labels), tau,
                     multi_teacher_kd_loss(t1_logits, t2_logits, student_logits, eta, temperature));
}

}  // namespace topokd::distill

#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/mask.hpp"
#include "cpcp/types.hpp"

namespace cpcp {

/// min l(L, S) s.t. ||L||_* <= tau_L, ||S||_1 <= tau_S.
struct Constrained {
  double tau_L = 0.0;
  double tau_S = 0.0;
};

/// min l(L, S) + lambda_L ||L||_* + lambda_S ||S||_1.
struct Penalized {
  double lambda_L = 0.0;
  double lambda_S = 0.0;
};

using Formulation = std::variant<Constrained, Penalized>;

/// Observed entries P_Omega[M] together with the formulation. Immutable after
/// construction; the mask is shared between copies.
class CpcpProblem {
 public:
  CpcpProblem(ObservationMask mask, std::vector<double> observed, Formulation formulation)
      : CpcpProblem(std::make_shared<const ObservationMask>(std::move(mask)), std::move(observed), formulation) {}

  CpcpProblem(std::shared_ptr<const ObservationMask> mask, std::vector<double> observed, Formulation formulation)
      : mask_(std::move(mask)), observed_(std::move(observed)), formulation_(formulation) {
    if (!mask_ || mask_->size() == 0) throw std::invalid_argument("CpcpProblem: empty mask");
    if (observed_.size() != mask_->size())
      throw std::invalid_argument("CpcpProblem: " + std::to_string(observed_.size()) + " observed values for " +
                                  std::to_string(mask_->size()) + " mask entries");
    if (const auto* c = std::get_if<Constrained>(&formulation_)) {
      if (!(c->tau_L > 0.0) || !(c->tau_S > 0.0)) throw std::invalid_argument("CpcpProblem: radii must be positive");
    } else {
      const auto& p = std::get<Penalized>(formulation_);
      if (!(p.lambda_L > 0.0) || !(p.lambda_S > 0.0)) throw std::invalid_argument("CpcpProblem: weights must be positive");
    }
  }

  const ObservationMask& mask() const { return *mask_; }
  std::shared_ptr<const ObservationMask> shared_mask() const { return mask_; }
  std::span<const double> observed() const { return observed_; }
  const Formulation& formulation() const { return formulation_; }
  Index rows() const { return mask_->rows(); }
  Index cols() const { return mask_->cols(); }

  bool is_constrained() const { return std::holds_alternative<Constrained>(formulation_); }
  const Constrained& constrained() const {
    if (!is_constrained()) throw std::invalid_argument("CpcpProblem: expected the norm-constrained formulation");
    return std::get<Constrained>(formulation_);
  }
  const Penalized& penalized() const {
    if (is_constrained()) throw std::invalid_argument("CpcpProblem: expected the penalized formulation");
    return std::get<Penalized>(formulation_);
  }

  /// Same data, different formulation.
  CpcpProblem with(Formulation formulation) const { return CpcpProblem(mask_, observed_, formulation); }

  /// ||P_Omega M||_F^2
  double observed_squared_norm() const { return squared_norm(observed_); }

 private:
  std::shared_ptr<const ObservationMask> mask_;
  std::vector<double> observed_;
  Formulation formulation_;
};

/// 1/2 sum_{Omega} (L + S - M)^2 from mask-aligned values.
inline double masked_loss(const CpcpProblem& problem, std::span<const double> low_rank_on_mask,
                          std::span<const double> sparse) {
  const auto m = problem.observed();
  if (low_rank_on_mask.size() != m.size() || sparse.size() != m.size())
    throw std::invalid_argument("masked_loss: value count does not match mask");
  KahanSum s;
  for (std::size_t e = 0; e < m.size(); ++e) {
    const double r = low_rank_on_mask[e] + sparse[e] - m[e];
    s += r * r;
  }
  return 0.5 * s.value();
}

/// Gradient of the smooth loss with respect to either block: P_Omega[L + S - M].
inline Residual masked_gradient(const CpcpProblem& problem, std::span<const double> low_rank_on_mask,
                                std::span<const double> sparse) {
  Residual r{std::vector<double>(problem.mask().size())};
  assemble_residual(low_rank_on_mask, sparse, problem.observed(), r.values);
  return r;
}

inline double eval_constrained(const CpcpProblem& problem, const LowRankIterate& l, const SparseIterate& s) {
  problem.constrained();
  return masked_loss(problem, l.sample(problem.mask()), s.values);
}

/// f(L, S); the nuclear norm is computed exactly.
inline double eval_penalized(const CpcpProblem& problem, const LowRankIterate& l, const SparseIterate& s) {
  const auto& w = problem.penalized();
  return masked_loss(problem, l.sample(problem.mask()), s.values) + w.lambda_L * nuclear_norm(l) + w.lambda_S * s.l1();
}

/// g(L, S, t_L, t_S) = loss + lambda_L t_L + lambda_S t_S.
inline double eval_epigraph(const CpcpProblem& problem, const EpigraphIterate& x) {
  const auto& w = problem.penalized();
  return masked_loss(problem, x.low_rank.sample(problem.mask()), x.sparse.values) + w.lambda_L * x.t_L +
         w.lambda_S * x.t_S;
}

}  // namespace cpcp

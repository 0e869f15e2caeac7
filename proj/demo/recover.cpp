// Recovers a low-rank + sparse split of a 200x200 matrix seen on 60% of its
// entries, with FW-T and then FISTA run to the same objective.

#include <cstdio>

#include "cpcp/cpcp.hpp"

int main() {
  cpcp::SyntheticSpec spec;
  spec.m = 200;
  spec.n = 200;
  spec.r = 5;
  spec.sparse_fraction = 0.01;
  spec.sparse_amplitude = 100.0;
  spec.noise_std = 0.1;
  spec.rho = 0.6;
  spec.seed = 7;
  const cpcp::GroundTruth gt = cpcp::gen_synthetic(spec);

  const cpcp::Penalized w = cpcp::default_weights(gt.mask, gt.observed, 0.005);
  const cpcp::CpcpProblem problem(gt.mask, gt.observed, w);

  cpcp::PenalizedConfig cfg;
  cfg.lambda_L = w.lambda_L;
  cfg.lambda_S = w.lambda_S;
  cfg.max_iter = 2000;
  cfg.epsilon = 1e-5;
  const cpcp::SolveResult fwt = cpcp::solve_fwt(problem, cfg);

  const cpcp::Matrix s = cpcp::scatter_to_dense(gt.mask, fwt.sparse.values);
  std::printf("FW-T   %5zu iterations  f = %.6e  rank %td  nnz %zu\n", fwt.iterations, fwt.objective,
              fwt.low_rank.rank(), fwt.sparse.nnz());
  std::printf("       rel. error L %.3e  S %.3e\n", cpcp::relative_error(fwt.low_rank.to_dense(), gt.L0),
              cpcp::relative_error(s, gt.S0_dense()));

  cpcp::IstaConfig ista;
  ista.lambda_L = w.lambda_L;
  ista.lambda_S = w.lambda_S;
  ista.max_iter = 5000;
  ista.target_objective = fwt.objective;
  const cpcp::SolveResult fista = cpcp::solve_fista(problem, ista);
  std::printf("FISTA  %5zu iterations to reach it (%s)\n", fista.iterations, fista.converged ? "reached" : "not reached");
  return 0;
}

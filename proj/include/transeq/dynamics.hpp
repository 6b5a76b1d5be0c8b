#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "transeq/assignment.hpp"
#include "transeq/distribution.hpp"

namespace transeq {

// logit:            x+ = (1 - h) x + h d softmax(-G(x) / T)
// imitation_logit:  x+ proportional to x^(1 - h) (d softmax(-G(x) / T))^h
// where T is the temperature and the softmax runs over one block (the paths
// of a pair, or the correspondences plus the outside option).
enum class DynamicsKind { Logit, ImitationLogit };

struct DynamicsConfig {
  DynamicsKind kind = DynamicsKind::Logit;
  double temperature = 1.0;  // path dynamics only; correspondence dynamics use the model's gamma
  double step = 0.5;
  std::size_t horizon = 1000;
  std::uint64_t seed = 0;
  bool random_start = false;  // draw the start from the seed instead of the uniform split
  std::size_t path_budget = 64;

  void validate() const;
};

struct Trajectory {
  std::vector<std::string> labels;         // one per state entry
  std::vector<std::vector<double>> states;  // initial state, then one per step
  std::vector<double> lyapunov;
  // max |x - logit response at x|, zero exactly at a rest point
  std::vector<double> residual;
  PathFlows paths;  // path dynamics: the route sets with the final flows

  // Header "step,<labels>,lyapunov,residual", one row per state.
  std::string csv() const;
};

// Lyapunov value: stochastic_objective. The start, when given, must list the
// simple paths of each pair in enumeration order.
Trajectory simulate_path_logit(const Network& network, const DemandMatrix& demands, const DynamicsConfig& cfg,
                               const std::optional<PathFlows>& start = std::nullopt);

// State: the admissible d (row-major order) and then d0; the outside option
// has cost 0. Lyapunov value: the entropic potential objective. Requires
// model.gamma() > 0.
Trajectory simulate_corr_logit(const PotentialModel& model, const DynamicsConfig& cfg,
                               const std::optional<std::vector<double>>& start = std::nullopt);

}  // namespace transeq

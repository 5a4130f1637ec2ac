#pragma once

// Joint training of prior, inference network and generator. Each iteration:
//   1. draw m examples (and n labeled examples when available)
//   2. advance m persistent chains on the prior         -> z-
//   3. draw z+ ~ q(z|x) by reparameterization
//   4. update the prior from F(z+) - F(z-) and the MI term
//   5. update encoder + decoder from the ELBO surrogate and the MI term
//   6. update prior + encoder from the classification loss on labeled data
// All gradients are taken at the parameters the iteration started with.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svebm/errors.hpp"
#include "svebm/langevin.hpp"
#include "svebm/model.hpp"
#include "svebm/objectives.hpp"
#include "svebm/optim.hpp"

namespace svebm {

struct TrainConfig {
  std::size_t iterations = 1000;
  double lr_prior = 1e-4;  // eta0
  double lr_psi = 1e-3;    // eta1
  double lr_sup = 1e-3;    // eta2
  std::size_t batch_size = 100;        // m
  std::size_t labeled_batch_size = 0;  // n
  LangevinConfig langevin;
  std::size_t num_chains = 0;  // L; 0 means max(m, 1000)
  double lambda = 0.0;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 5.0;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;
  std::size_t kl_warmup = 0;           // linear KL warm-up length in steps; 0 disables
  std::size_t chain_restart_every = 0; // 0 disables
  bool labeled_in_unlabeled = true;

  void validate() const;
  std::size_t chains() const;
  OptimizerConfig optimizer_config(double lr) const;
};

struct DataCursor {
  std::uint64_t epoch = 0;
  std::size_t position = 0;
  bool operator==(const DataCursor&) const = default;
};

struct ModelState {
  Model model;
  ChainPool pool;
  Optimizer opt_prior;
  Optimizer opt_psi;
  Optimizer opt_sup;
  std::uint64_t step = 0;
  Rng rng;
  DataCursor unlabeled_cursor;
  DataCursor labeled_cursor;

  /// Fresh state: parameters, chains and streams all derived from cfg.seed.
  static ModelState create(const ModelConfig& model_cfg, const TrainConfig& cfg);
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, LossBreakdown parts)
      : Error("E_NONFINITE", what), parts_(parts) {}
  const LossBreakdown& parts() const noexcept { return parts_; }

 private:
  LossBreakdown parts_;
};

/// One iteration. On failure the chain pool and random stream are restored
/// and parameters are left untouched.
LossBreakdown train_step(ModelState& state, std::span<const Example> unlabeled,
                         std::span<const Example> labeled, const TrainConfig& cfg);

/// Indices of the next `count` examples from reshuffled epochs.
std::vector<std::size_t> next_batch(DataCursor& cursor, std::size_t dataset_size, std::size_t count,
                                    std::uint64_t stream_seed);

/// Tab-separated training log header.
inline constexpr const char* kTrainLogHeader =
    "step\trecon\tkl\tprior_energy\tmutual_info\tsupervised_ce\ttotal";

/// Extra "key=value" settings echoed into checkpoints (data paths and such).
using ConfigExtras = std::vector<std::pair<std::string, std::string>>;

struct FitOptions {
  std::filesystem::path log_path;        // empty: no log file
  std::filesystem::path checkpoint_dir;  // empty: no periodic checkpoints
  std::size_t stop_at = 0;               // stop early at this step (0: run to cfg.iterations)
  ConfigExtras config_extra;
  std::function<void(const ModelState&, const LossBreakdown&)> on_step;
};

/// Runs train_step from state.step up to cfg.iterations. A fresh state
/// (step 0) starts a new log; a resumed one appends.
void fit(ModelState& state, const std::vector<Example>& unlabeled, const std::vector<Example>& labeled,
         const TrainConfig& cfg, const FitOptions& opt = {});

std::string format_log_row(std::uint64_t step, const LossBreakdown& lb);

}  // namespace svebm

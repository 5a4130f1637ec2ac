#include "svebm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "svebm/checkpoint.hpp"

namespace svebm {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPoolStream = 2;
constexpr std::uint64_t kStepStream = 3;
constexpr std::uint64_t kUnlabeledOrderStream = 4;
constexpr std::uint64_t kLabeledOrderStream = 5;

std::vector<std::vector<double>> take_grads(const ParamRefs& ps) {
  std::vector<std::vector<double>> out;
  out.reserve(ps.size());
  for (Parameter* p : ps) out.push_back(p->grad);
  return out;
}

void put_grads(const ParamRefs& ps, const std::vector<std::vector<double>>& g) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->grad = g[i];
}

std::vector<Example> gather(std::span<const Example> data, const std::vector<std::size_t>& idx) {
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_prior >= 0.0) || !(lr_psi >= 0.0) || !(lr_sup >= 0.0))
    throw ConfigError("learning rates must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (num_chains != 0 && num_chains < batch_size)
    throw ConfigError("train.num_chains must be >= train.batch_size");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  langevin.validate();
}

std::size_t TrainConfig::chains() const {
  return num_chains != 0 ? num_chains : std::max<std::size_t>(batch_size, 1000);
}

OptimizerConfig TrainConfig::optimizer_config(double lr) const {
  OptimizerConfig c;
  c.kind = optimizer;
  c.lr = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  return c;
}

ModelState ModelState::create(const ModelConfig& model_cfg, const TrainConfig& cfg) {
  ModelState s;
  s.model = Model(model_cfg);
  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  s.model.init(init_rng);
  s.pool = ChainPool(cfg.chains(), model_cfg.latent_dim, derive_seed(cfg.seed, kPoolStream));
  s.opt_prior = Optimizer(cfg.optimizer_config(cfg.lr_prior));
  s.opt_psi = Optimizer(cfg.optimizer_config(cfg.lr_psi));
  s.opt_sup = Optimizer(cfg.optimizer_config(cfg.lr_sup));
  s.rng = Rng(derive_seed(cfg.seed, kStepStream));
  return s;
}

std::vector<std::size_t> next_batch(DataCursor& cursor, std::size_t dataset_size, std::size_t count,
                                    std::uint64_t stream_seed) {
  require(dataset_size > 0, "next_batch: empty dataset");
  std::vector<std::size_t> out;
  out.reserve(count);
  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~std::uint64_t{0};
  while (out.size() < count) {
    if (cursor.position >= dataset_size) {
      ++cursor.epoch;
      cursor.position = 0;
    }
    if (perm_epoch != cursor.epoch) {
      perm.resize(dataset_size);
      std::iota(perm.begin(), perm.end(), 0);
      Rng r(derive_seed(stream_seed, cursor.epoch));
      for (std::size_t i = dataset_size; i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
      perm_epoch = cursor.epoch;
    }
    out.push_back(perm[cursor.position++]);
  }
  return out;
}

LossBreakdown train_step(ModelState& state, std::span<const Example> unlabeled,
                         std::span<const Example> labeled, const TrainConfig& cfg) {
  require(unlabeled.size() == cfg.batch_size, "train_step: unlabeled batch size does not match config");
  require(labeled.empty() || labeled.size() == cfg.labeled_batch_size,
          "train_step: labeled batch size does not match config");
  Model& model = state.model;
  const ChainPool pool_before = state.pool;
  const Rng rng_before = state.rng;
  const ParamRefs alpha = model.prior_params();
  const ParamRefs psi = model.psi_params();
  const ParamRefs gamma = model.supervised_params();
  const std::size_t d = model.config.latent_dim;

  LossBreakdown lb;
  std::vector<std::vector<double>> g_alpha, g_psi, g_gamma;
  try {
    if (cfg.chain_restart_every > 0 && state.step > 0 && state.step % cfg.chain_restart_every == 0)
      state.pool.reinitialize(state.rng);

    // Step 2: negative samples from the persistent chains.
    const Matrix z_neg = sample_prior(state.pool, model.prior, cfg.langevin, cfg.batch_size, state.rng);

    // Step 3: posterior samples.
    Matrix noise(cfg.batch_size, d);
    state.rng.fill_normal(noise.flat());

    // Steps 4-5: gradients of the unsupervised objective.
    zero_grads(model.all_params());
    IbOptions opt;
    opt.lambda = cfg.lambda;
    if (cfg.kl_warmup > 0)
      opt.kl_weight = std::min(1.0, static_cast<double>(state.step + 1) / static_cast<double>(cfg.kl_warmup));
    lb = ib_objective(model, unlabeled, noise, opt);
    accumulate_energy_grad(model.prior, z_neg, 1.0 / static_cast<double>(cfg.batch_size));
    g_alpha = take_grads(alpha);
    g_psi = take_grads(psi);

    // Step 6: supervised gradient at the same parameters.
    if (!labeled.empty()) {
      zero_grads(model.all_params());
      lb.supervised_ce = supervised_loss_batch(model, labeled);
      g_gamma = take_grads(gamma);
    }
    lb.finalize(cfg.lambda);

    bool grads_finite = true;
    for (const auto* g : {&g_alpha, &g_psi, &g_gamma})
      for (const auto& v : *g) grads_finite = grads_finite && all_finite(v);
    if (!lb.finite() || !grads_finite) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "non-finite loss at step %llu (recon=%g kl=%g prior_energy=%g mutual_info=%g "
                    "supervised_ce=%g total=%g)",
                    static_cast<unsigned long long>(state.step), lb.recon, lb.kl, lb.prior_energy,
                    lb.mutual_info, lb.supervised_ce, lb.total);
      throw NonFiniteLoss(buf, lb);
    }
  } catch (...) {
    state.pool = pool_before;
    state.rng = rng_before;
    zero_grads(model.all_params());
    throw;
  }

  put_grads(alpha, g_alpha);
  clip_grad_norm(alpha, cfg.clip_norm);
  state.opt_prior.step(alpha);

  put_grads(psi, g_psi);
  clip_grad_norm(psi, cfg.clip_norm);
  state.opt_psi.step(psi);

  if (!labeled.empty()) {
    put_grads(gamma, g_gamma);
    clip_grad_norm(gamma, cfg.clip_norm);
    state.opt_sup.step(gamma);
  }
  zero_grads(model.all_params());
  ++state.step;
  return lb;
}

std::string format_log_row(std::uint64_t step, const LossBreakdown& lb) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g",
                static_cast<unsigned long long>(step), lb.recon, lb.kl, lb.prior_energy, lb.mutual_info,
                lb.supervised_ce, lb.total);
  return buf;
}

void fit(ModelState& state, const std::vector<Example>& unlabeled, const std::vector<Example>& labeled,
         const TrainConfig& cfg, const FitOptions& opt) {
  cfg.validate();
  if (unlabeled.empty() && labeled.empty()) throw DataError("training needs at least one example");
  if (cfg.labeled_batch_size > 0 && labeled.empty())
    throw DataError("train.labeled_batch_size > 0 but no labeled examples were given");

  std::vector<Example> stream = unlabeled;
  if (cfg.labeled_in_unlabeled) stream.insert(stream.end(), labeled.begin(), labeled.end());
  if (stream.empty()) throw DataError("no examples for the unlabeled stream");
  const bool use_labeled = cfg.labeled_batch_size > 0 && !labeled.empty();

  std::ofstream log;
  if (!opt.log_path.empty()) {
    const bool fresh = state.step == 0;
    log.open(opt.log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log " + opt.log_path.string());
    if (fresh) log << kTrainLogHeader << '\n';
  }
  if (!opt.checkpoint_dir.empty()) std::filesystem::create_directories(opt.checkpoint_dir);

  const std::uint64_t end = opt.stop_at > 0 ? std::min<std::uint64_t>(opt.stop_at, cfg.iterations)
                                            : cfg.iterations;
  const std::uint64_t unl_seed = derive_seed(cfg.seed, kUnlabeledOrderStream);
  const std::uint64_t lab_seed = derive_seed(cfg.seed, kLabeledOrderStream);
  while (state.step < end) {
    const auto ui = next_batch(state.unlabeled_cursor, stream.size(), cfg.batch_size, unl_seed);
    const std::vector<Example> ub = gather(stream, ui);
    std::vector<Example> lbatch;
    if (use_labeled)
      lbatch = gather(labeled, next_batch(state.labeled_cursor, labeled.size(), cfg.labeled_batch_size, lab_seed));
    const LossBreakdown parts = train_step(state, ub, lbatch, cfg);
    if (log.is_open() && state.step % cfg.log_every == 0) {
      log << format_log_row(state.step, parts) << '\n';
      if (!log) throw IoError("failed writing training log " + opt.log_path.string());
    }
    if (opt.on_step) opt.on_step(state, parts);
    if (!opt.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
      save_checkpoint(opt.checkpoint_dir / ("step_" + std::to_string(state.step) + ".ckpt"), state, cfg,
                      opt.config_extra);
  }
}

}  // namespace svebm

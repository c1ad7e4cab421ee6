#include "psi/train.hpp"

#include <cmath>
#include <thread>

namespace psi {

namespace {

Checkpoint make_checkpoint(const LrasModel& model, const WsdSchedule& schedule,
                           int step, TrainPhase phase,
                           const std::vector<Tensor>& adam_m,
                           const std::vector<Tensor>& adam_v,
                           uint64_t data_rng_state, const RunMeta& meta) {
  Checkpoint ck;
  ck.model = model.config();
  ck.schedule = schedule;
  ck.step = step;
  ck.phase = phase;
  ck.registry = meta.registry;
  ck.vocab = meta.vocab;
  ck.camera_fraction = meta.camera_fraction;
  ck.extra = meta.extra;
  ck.data_rng_state = data_rng_state;
  ck.params = model.params();
  ck.adam_m = adam_m;
  ck.adam_v = adam_v;
  return ck;
}

TrainPhase phase_of_step(const WsdSchedule& s, int step) {
  if (step <= s.warmup) return TrainPhase::warmup;
  if (step <= s.stable_end()) return TrainPhase::stable;
  if (step < s.total_steps()) return TrainPhase::decay;
  return TrainPhase::final_;
}

std::vector<Tensor> zero_moments(const LrasModel& model) {
  std::vector<Tensor> out = model.params();
  for (Tensor& t : out) t.v.setZero();
  return out;
}

// Steps [first_step, last_step]. Batch items get sequentially drawn fork
// seeds, so the realized data stream is independent of thread scheduling.
TrainResult run_steps(LrasModel& model, std::vector<Tensor> adam_m,
                      std::vector<Tensor> adam_v, const WsdSchedule& schedule,
                      const SequenceSampler& sampler, const TrainOptions& opts,
                      Rng& data_rng, int first_step, int last_step,
                      const RunMeta& meta) {
  if (opts.batch < 1 || opts.threads < 1)
    throw ConfigError("batch and threads must be >= 1");

  TrainResult result;
  const size_t np = model.params().size();

  std::vector<std::vector<Eigen::MatrixXf>> item_grads(opts.batch);
  for (auto& g : item_grads) g = model.zero_like_params();
  std::vector<double> item_loss(opts.batch, 0.0);
  std::vector<Eigen::MatrixXf> total = model.zero_like_params();

  for (int step = first_step; step <= last_step; ++step) {
    std::vector<uint64_t> seeds(opts.batch);
    for (int i = 0; i < opts.batch; ++i) seeds[i] = data_rng.next_u64();

    auto worker = [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        for (auto& g : item_grads[i]) g.setZero();
        Rng item_rng(seeds[i]);
        TokenSequence seq = sampler(item_rng);
        item_loss[i] = model.loss_and_grad(seq, item_grads[i]);
      }
    };
    int n_threads = std::min(opts.threads, opts.batch);
    if (n_threads <= 1) {
      worker(0, opts.batch);
    } else {
      std::vector<std::thread> pool;
      int per = (opts.batch + n_threads - 1) / n_threads;
      for (int t = 0; t < n_threads; ++t) {
        int b = t * per, e = std::min(opts.batch, b + per);
        if (b < e) pool.emplace_back(worker, b, e);
      }
      for (auto& th : pool) th.join();
    }

    // Index-ordered reduction keeps the result bit-identical across thread
    // counts.
    const float inv_batch = 1.0f / static_cast<float>(opts.batch);
    for (size_t j = 0; j < np; ++j) {
      total[j].setZero();
      for (int i = 0; i < opts.batch; ++i) total[j] += item_grads[i][j];
      total[j] *= inv_batch;
    }
    double mean_loss = 0.0;
    for (int i = 0; i < opts.batch; ++i) mean_loss += item_loss[i];
    mean_loss /= opts.batch;

    double norm_sq = 0.0;
    for (size_t j = 0; j < np; ++j)
      norm_sq += static_cast<double>(
          total[j].cast<double>().array().square().sum());
    float scale = 1.0f;
    if (opts.clip_norm > 0.0f) {
      double norm = std::sqrt(norm_sq);
      if (norm > opts.clip_norm)
        scale = opts.clip_norm / static_cast<float>(norm);
    }

    const float lr = schedule.lr_at(step);
    const float bc1 = 1.0f - static_cast<float>(std::pow(opts.beta1, step));
    const float bc2 = 1.0f - static_cast<float>(std::pow(opts.beta2, step));
    auto& params = model.params();
    for (size_t j = 0; j < np; ++j) {
      Eigen::MatrixXf g = total[j] * scale;
      adam_m[j].v = opts.beta1 * adam_m[j].v + (1.0f - opts.beta1) * g;
      adam_v[j].v.array() = opts.beta2 * adam_v[j].v.array() +
                            (1.0f - opts.beta2) * g.array().square();
      Eigen::ArrayXXf mhat = adam_m[j].v.array() / bc1;
      Eigen::ArrayXXf vhat = adam_v[j].v.array() / bc2;
      params[j].v.array() -= lr * (mhat / (vhat.sqrt() + opts.adam_eps));
      const std::string& name = params[j].name;
      bool skip_decay = name.ends_with(".g") || name.ends_with(".b") ||
                        name.ends_with(".b1") || name.ends_with(".b2");
      if (!skip_decay && opts.weight_decay > 0.0f)
        params[j].v.array() -= lr * opts.weight_decay * params[j].v.array();
    }

    result.curve.push_back(
        {step, lr, static_cast<float>(mean_loss)});
    if (!std::isfinite(mean_loss))
      throw DivergenceError("training loss is not finite at step " +
                            std::to_string(step));

    if (step == schedule.stable_end())
      result.stable_ckpt =
          make_checkpoint(model, schedule, step, TrainPhase::stable, adam_m,
                          adam_v, data_rng.state(), meta);
  }

  result.final_ckpt =
      make_checkpoint(model, schedule, last_step, phase_of_step(schedule, last_step),
                      adam_m, adam_v, data_rng.state(), meta);
  return result;
}

}  // namespace

TrainResult train_model(const ModelConfig& mcfg, const WsdSchedule& schedule,
                        const SequenceSampler& sampler,
                        const TrainOptions& opts, uint64_t data_seed,
                        const RunMeta& meta) {
  if (schedule.warmup < 1 || schedule.stable < 0 || schedule.decay < 1)
    throw ConfigError("degenerate schedule");
  LrasModel model(mcfg);
  Rng base(data_seed);
  Rng init_rng = base.fork(0);
  model.init_params(init_rng);
  Rng data_rng = base.fork(1);
  return run_steps(model, zero_moments(model), zero_moments(model), schedule,
                   sampler, opts, data_rng, 1, schedule.total_steps(), meta);
}

TrainResult resume_training(const Checkpoint& start,
                            const WsdSchedule& schedule,
                            const SequenceSampler& sampler,
                            const TrainOptions& opts) {
  if (schedule.warmup != start.schedule.warmup ||
      schedule.peak_lr != start.schedule.peak_lr)
    throw ConfigError("resume schedule changes the already-run ramp");
  if (start.step > schedule.stable_end() ||
      start.step > start.schedule.stable_end())
    throw PhaseError("only warmup/stable checkpoints can be resumed");
  if (schedule.total_steps() <= start.step)
    throw ConfigError("resume schedule ends at or before the checkpoint");

  LrasModel model = model_from_checkpoint(start);
  RunMeta meta{start.registry, start.vocab, start.camera_fraction, start.extra};
  Rng data_rng;
  data_rng.set_state(start.data_rng_state);
  return run_steps(model, start.adam_m, start.adam_v, schedule, sampler, opts,
                   data_rng, start.step + 1, schedule.total_steps(), meta);
}

LrasModel model_from_checkpoint(const Checkpoint& ckpt) {
  LrasModel model(ckpt.model);
  auto& params = model.params();
  if (params.size() != ckpt.params.size())
    throw IoError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.params[i].name ||
        params[i].v.rows() != ckpt.params[i].v.rows() ||
        params[i].v.cols() != ckpt.params[i].v.cols())
      throw IoError("checkpoint tensor mismatch at " + params[i].name);
    params[i].v = ckpt.params[i].v;
  }
  return model;
}

double eval_mean_loss(const Checkpoint& ckpt, const SequenceSampler& sampler,
                      int n, uint64_t seed) {
  if (n < 1) throw ConfigError("need at least one eval sequence");
  LrasModel model = model_from_checkpoint(ckpt);
  Rng rng(seed);
  double loss_sum = 0.0;
  long token_sum = 0;
  for (int i = 0; i < n; ++i) {
    Rng item_rng(rng.next_u64());
    TokenSequence seq = sampler(item_rng);
    int rows = 0;
    double l = model.loss_only(seq, &rows);
    loss_sum += l * rows;
    token_sum += rows;
  }
  return loss_sum / static_cast<double>(token_sum);
}

}  // namespace psi

#include "ata/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"

namespace ata::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int argmax_row(const Tensor& logits, std::size_t row) {
  int best = 0;
  double bv = logits.at(row, 0);
  for (std::size_t j = 1; j < logits.cols(); ++j)
    if (logits.at(row, j) > bv) {
      bv = logits.at(row, j);
      best = static_cast<int>(j);
    }
  return best;
}

// Per-clip embedding for alignment: token grid mean-pooled to one vector.
ValueId embed_clip_pooled(Tape& tape, const Tensor& clip, const model::ModelConfig& cfg,
                          const model::Binding& binding, RngState& rng) {
  model::TokenGrid grid = model::embed_dynamic(tape, clip, cfg.embedder, binding, rng);
  return tape.mean_rows(grid.tokens);
}

}  // namespace

void TrainSchedule::validate() const {
  require(warmup_epochs <= stage2_epochs || stage2_epochs == 0, ErrorKind::BadConfig,
          "warmup cannot exceed the stage-2 epoch count");
  for (std::size_t i = 1; i < decay_epochs.size(); ++i)
    require(decay_epochs[i - 1] < decay_epochs[i], ErrorKind::BadConfig,
            "decay epochs must be strictly increasing");
  require(batch_size >= 1, ErrorKind::BadConfig, "batch size must be >= 1");
}

double lr_at(const TrainSchedule& s, int epoch) {
  if (epoch < s.warmup_epochs)
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
  double lr = s.base_lr;
  for (int d : s.decay_epochs)
    if (epoch >= d) lr *= s.decay_factor;
  return lr;
}

std::string format_sig12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.11e", v);
  return buf;
}

std::string MetricLog::to_jsonl() const {
  std::ostringstream os;
  for (const MetricRecord& r : records) {
    os << "{\"stage\":" << r.stage << ",\"epoch\":" << r.epoch << ",\"train_loss\":\""
       << format_sig12(r.train_loss) << "\",\"train_acc\":\"" << format_sig12(r.train_acc)
       << "\",\"test_acc\":\"" << format_sig12(r.test_acc) << "\",\"otdd_estimate\":\""
       << format_sig12(r.otdd_estimate) << "\",\"lr\":\"" << format_sig12(r.lr) << "\"}\n";
  }
  os << "{\"final\":true,\"train_acc\":\"" << format_sig12(final_train_acc)
     << "\",\"test_acc\":\"" << format_sig12(final_test_acc) << "\",\"train_test_gap\":\""
     << format_sig12(train_test_gap()) << "\"}\n";
  return os.str();
}

MetricLog MetricLog::from_jsonl_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path);
  MetricLog log;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded(), ErrorKind::BadFile, "malformed metric line in " + path);
    if (j.contains("final")) {
      log.final_train_acc = std::stod(j["train_acc"].get<std::string>());
      log.final_test_acc = std::stod(j["test_acc"].get<std::string>());
      continue;
    }
    MetricRecord r;
    r.stage = j["stage"].get<int>();
    r.epoch = j["epoch"].get<int>();
    r.train_loss = std::stod(j["train_loss"].get<std::string>());
    r.train_acc = std::stod(j["train_acc"].get<std::string>());
    r.test_acc = std::stod(j["test_acc"].get<std::string>());
    r.otdd_estimate = std::stod(j["otdd_estimate"].get<std::string>());
    r.lr = std::stod(j["lr"].get<std::string>());
    log.records.push_back(r);
  }
  return log;
}

void MetricLog::write(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path + " for writing");
  const std::string s = to_jsonl();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  require(f.good(), ErrorKind::BadFile, "short write to " + path);
}

void MetricLog::append(MetricLog other) {
  for (auto& r : other.records) records.push_back(r);
  final_train_acc = other.final_train_acc;
  final_test_acc = other.final_test_acc;
}

void SgdOptimizer::step(model::ParamStore& store, const std::map<std::string, Tensor>& grads,
                        double lr) {
  for (const auto& [name, g] : grads) {
    if (store.frozen(name)) continue;
    Tensor& theta = store.get(name);
    require(theta.same_shape(g), ErrorKind::ShapeMismatch, "gradient shape mismatch for " + name);
    auto [it, fresh] = velocity_.try_emplace(name, Tensor::zeros(g.shape()));
    Tensor& v = it->second;
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      theta[i] -= lr * v[i];
    }
  }
}

void ClipDataset::validate() const {
  require(!clips.empty(), ErrorKind::EmptyDataset, "clip dataset is empty");
  require(clips.size() == labels.size(), ErrorKind::LengthMismatch, "one label per clip required");
  require(num_classes >= 1, ErrorKind::EmptyClass, "num_classes must be positive");
  for (int y : labels)
    require(y >= 0 && y < num_classes, ErrorKind::MissingLabelEntry, "clip label out of range");
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, RngState& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

struct Stage1Loss {
  ValueId loss = -1;
  double metric_value = 0.0;  // same scale as the epoch diagnostic
};

Stage1Loss stage1_batch_loss(Tape& tape, ValueId feats, const std::vector<int>& batch_labels,
                             const std::vector<double>& class_weights,
                             const otdd::LabeledEmbeddingSet& stat, const AlignOptions& align,
                             RngState& rng) {
  Stage1Loss out;
  if (align.metric == "otdd") {
    const auto terms = otdd::alignment_loss_terms(tape.value(feats), batch_labels, class_weights,
                                                  stat, align.b, align.rounds, align.otdd, rng);
    require(!terms.empty(), ErrorKind::EmptyClass, "no alignment terms for this batch");
    const double inv_p = 1.0 / align.otdd.p;
    ValueId acc = -1;
    for (const auto& term : terms) {
      ValueId sub = tape.slice_rows(feats, term.rows);
      ValueId v = tape.weighted_pow_dist(sub, stat.features, term.coeff, align.otdd.p);
      if (term.constant != 0.0) v = tape.add_const(v, term.constant);
      v = tape.scale(tape.pow_const(v, inv_p), term.weight);
      acc = acc < 0 ? v : tape.add(acc, v);
      out.metric_value += term.weight * term.value;
    }
    out.loss = acc;
  } else if (align.metric == "mmd") {
    out.loss = tape.mmd_sq(feats, stat.features, align.mmd_bandwidth);
    out.metric_value = std::sqrt(std::max(tape.value(out.loss).scalar_value(), 0.0));
  } else if (align.metric == "cka") {
    // pair the batch with an equal-size random static subset
    const std::size_t nb = tape.value(feats).rows();
    require(stat.size() >= 2, ErrorKind::RowCountMismatch, "cka needs >= 2 static rows");
    const std::size_t k = std::min(nb, stat.size());
    std::vector<std::size_t> rows_b(k), rows_s;
    for (std::size_t i = 0; i < k; ++i) rows_b[i] = i;
    rows_s = rng.sample_without_replacement(stat.size(), k);
    Tensor ystat({k, stat.width()});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < stat.width(); ++c) ystat.at(i, c) = stat.features.at(rows_s[i], c);
    ValueId x = k == nb ? feats : tape.slice_rows(feats, rows_b);
    ValueId sim = tape.linear_cka(x, std::move(ystat));
    out.metric_value = 1.0 - tape.value(sim).scalar_value();
    out.loss = tape.add_const(tape.scale(sim, -1.0), 1.0);
  } else if (align.metric == "euclid") {
    Tensor mu({1, stat.width()});
    for (std::size_t i = 0; i < stat.size(); ++i)
      for (std::size_t c = 0; c < stat.width(); ++c) mu[c] += stat.features.at(i, c);
    for (std::size_t c = 0; c < stat.width(); ++c) mu[c] /= static_cast<double>(stat.size());
    ValueId diff = tape.sub(tape.mean_rows(feats), tape.leaf(std::move(mu)));
    out.loss = tape.pow_const(tape.sum(tape.mul(diff, diff)), 0.5);
    out.metric_value = tape.value(out.loss).scalar_value();
  } else {
    fail(ErrorKind::BadConfig, "unknown alignment metric '" + align.metric + "'");
  }
  return out;
}

// Full-dataset diagnostic used in the per-epoch log.
double stage1_epoch_estimate(const ClipDataset& dyn, const otdd::LabeledEmbeddingSet& stat,
                             model::ParamStore& store, const RunContext& ctx, RngState rng) {
  Tape tape;
  model::Binding binding = model::bind_params(tape, store);
  std::vector<ValueId> pooled;
  pooled.reserve(dyn.size());
  for (const Tensor& clip : dyn.clips)
    pooled.push_back(embed_clip_pooled(tape, clip, ctx.model, binding, rng));
  const Tensor feats = tape.value(tape.concat_rows(pooled));
  if (ctx.align.metric == "otdd") {
    otdd::LabeledEmbeddingSet dyn_emb{feats, dyn.labels, dyn.num_classes};
    RngState est_rng = rng.fork("stage1.estimate");
    return otdd::otdd_class_weighted_stochastic(dyn_emb, stat, ctx.align.b, ctx.align.rounds,
                                                ctx.align.otdd, est_rng)
        .aggregate;
  }
  if (ctx.align.metric == "mmd") return otdd::mmd(feats, stat.features, ctx.align.mmd_bandwidth);
  if (ctx.align.metric == "cka") {
    const std::size_t k = std::min(feats.rows(), stat.size());
    Tensor a({k, feats.cols()}), b({k, feats.cols()});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < feats.cols(); ++c) {
        a.at(i, c) = feats.at(i, c);
        b.at(i, c) = stat.features.at(i, c);
      }
    return 1.0 - otdd::cka(a, b);
  }
  return otdd::mean_euclidean(feats, stat.features);
}

}  // namespace

MetricLog stage1_align(const ClipDataset& dyn, const otdd::LabeledEmbeddingSet& stat,
                       model::ParamStore& store, const RunContext& ctx, RngState& rng) {
  dyn.validate();
  stat.validate();
  ctx.schedule.validate();
  MetricLog log;
  if (ctx.schedule.stage1_epochs == 0) return log;

  std::vector<double> class_weights(static_cast<std::size_t>(dyn.num_classes), 0.0);
  for (int y : dyn.labels) class_weights[static_cast<std::size_t>(y)] += 1.0;
  for (double& w : class_weights) w /= static_cast<double>(dyn.size());

  SgdOptimizer opt(ctx.schedule.momentum);
  RngState order_rng = rng.fork("stage1.order");
  RngState step_rng = rng.fork("stage1.steps");
  RngState diag_rng = rng.fork("stage1.diag");

  for (int epoch = 0; epoch < ctx.schedule.stage1_epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto batches = make_batches(dyn.size(), ctx.schedule.batch_size, order_rng);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      Tape tape;
      model::Binding binding = model::bind_params(tape, store);
      std::vector<ValueId> pooled;
      std::vector<int> batch_labels;
      pooled.reserve(batch.size());
      for (std::size_t idx : batch) {
        pooled.push_back(embed_clip_pooled(tape, dyn.clips[idx], ctx.model, binding, step_rng));
        batch_labels.push_back(dyn.labels[idx]);
      }
      ValueId feats = tape.concat_rows(pooled);
      Stage1Loss sl = stage1_batch_loss(tape, feats, batch_labels, class_weights, stat, ctx.align,
                                        step_rng);
      const double loss_value = tape.value(sl.loss).scalar_value();
      require(std::isfinite(loss_value), ErrorKind::NonFiniteLoss,
              "stage-1 loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss_value;
      const auto grads = tape.backward(sl.loss);
      opt.step(store, model::masked_gradients(binding, store, grads), ctx.schedule.stage1_lr);
    }
    MetricRecord rec;
    rec.stage = 1;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.otdd_estimate =
        stage1_epoch_estimate(dyn, stat, store, ctx, diag_rng.fork(static_cast<std::uint64_t>(epoch)));
    rec.lr = ctx.schedule.stage1_lr;
    rec.wall_ms = elapsed_ms(t0);
    log.records.push_back(rec);
  }
  return log;
}

double evaluate_accuracy(const ClipDataset& data, const model::ModelConfig& cfg,
                         model::ParamStore& store, RngState eval_rng) {
  data.validate();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape;
    model::Binding binding = model::bind_params(tape, store);
    RngState clip_rng = eval_rng.fork(static_cast<std::uint64_t>(i));
    ValueId logits = model::model_forward(tape, data.clips[i], cfg, binding, clip_rng, false);
    if (argmax_row(tape.value(logits), 0) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

MetricLog stage2_adapt(const ClipDataset& train, const ClipDataset& test,
                       model::ParamStore& store, const RunContext& ctx, RngState& rng,
                       double carried_otdd) {
  train.validate();
  test.validate();
  ctx.schedule.validate();
  MetricLog log;
  if (ctx.schedule.stage2_epochs == 0) return log;

  SgdOptimizer opt(ctx.schedule.momentum);
  RngState order_rng = rng.fork("stage2.order");
  RngState step_rng = rng.fork("stage2.steps");
  RngState drop_rng = rng.fork("stage2.dropout");
  RngState eval_rng = rng.fork("stage2.eval");

  for (int epoch = 0; epoch < ctx.schedule.stage2_epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_at(ctx.schedule, epoch);
    const auto batches = make_batches(train.size(), ctx.schedule.batch_size, order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batches) {
      Tape tape;
      model::Binding binding = model::bind_params(tape, store);
      std::vector<ValueId> logit_rows;
      std::vector<int> batch_labels;
      logit_rows.reserve(batch.size());
      for (std::size_t idx : batch) {
        logit_rows.push_back(model::model_forward(tape, train.clips[idx], ctx.model, binding,
                                                  step_rng, true, &drop_rng));
        batch_labels.push_back(train.labels[idx]);
      }
      ValueId logits = tape.concat_rows(logit_rows);
      const Tensor& lv = tape.value(logits);
      for (std::size_t r = 0; r < batch.size(); ++r)
        if (argmax_row(lv, r) == batch_labels[r]) ++correct;
      ValueId loss = tape.cross_entropy(logits, batch_labels);
      const double loss_value = tape.value(loss).scalar_value();
      require(std::isfinite(loss_value), ErrorKind::NonFiniteLoss,
              "stage-2 loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss_value;
      const auto grads = tape.backward(loss);
      opt.step(store, model::masked_gradients(binding, store, grads), lr);
    }
    MetricRecord rec;
    rec.stage = 2;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.test_acc = evaluate_accuracy(test, ctx.model, store, eval_rng);
    rec.otdd_estimate = carried_otdd;
    rec.lr = lr;
    rec.wall_ms = elapsed_ms(t0);
    log.records.push_back(rec);
    log.final_train_acc = rec.train_acc;
    log.final_test_acc = rec.test_acc;
  }
  return log;
}

RunResult run_all(const ClipDataset& train, const ClipDataset& test,
                  const std::vector<Tensor>& static_clouds, const std::vector<int>& static_labels,
                  int static_classes, const RunContext& ctx, std::uint64_t seed) {
  RngState root(seed);
  RunResult out;
  model::init_params(out.params, ctx.model, root);

  double carried_otdd = 0.0;
  if (ctx.model.toggles.pae && ctx.schedule.stage1_epochs > 0) {
    require(!static_clouds.empty() && static_clouds.size() == static_labels.size(),
            ErrorKind::EmptyDataset, "stage 1 needs a labeled static set");
    Tensor stat_feats({static_clouds.size(), ctx.model.dim});
    for (std::size_t i = 0; i < static_clouds.size(); ++i) {
      const Tensor e = model::embed_static(static_clouds[i], out.params);
      for (std::size_t c = 0; c < ctx.model.dim; ++c) stat_feats.at(i, c) = e[c];
    }
    otdd::LabeledEmbeddingSet stat{std::move(stat_feats), static_labels, static_classes};
    RngState s1 = root.fork("stage1");
    out.log = stage1_align(train, stat, out.params, ctx, s1);
    if (!out.log.records.empty()) carried_otdd = out.log.records.back().otdd_estimate;
  }

  RngState s2 = root.fork("stage2");
  out.log.append(stage2_adapt(train, test, out.params, ctx, s2, carried_otdd));
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "config_id,seed,final_train_acc,final_test_acc,gap,params_trainable,otdd_final\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      os << r.config_id << "," << r.seed << ",error,error,error,0,error\n";
      continue;
    }
    os << r.config_id << "," << r.seed << "," << format_sig12(r.final_train_acc) << ","
       << format_sig12(r.final_test_acc) << "," << format_sig12(r.gap) << ","
       << r.params_trainable << "," << format_sig12(r.otdd_final) << "\n";
  }
  return os.str();
}

namespace {

std::size_t worker_cap() {
  const char* env = std::getenv("ATA_THREADS");
  if (!env) return 0;
  const long v = std::strtol(env, nullptr, 10);
  return v <= 0 ? 0 : static_cast<std::size_t>(v);
}

}  // namespace

std::vector<SummaryRow> run_ablation(const std::vector<AblationCell>& grid,
                                     const std::vector<std::uint64_t>& seeds,
                                     const ClipDataset& train, const ClipDataset& test,
                                     const std::vector<Tensor>& static_clouds,
                                     const std::vector<int>& static_labels, int static_classes) {
  struct Job {
    const AblationCell* cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& cell : grid)
    for (std::uint64_t s : seeds) jobs.push_back({&cell, s});

  auto run_job = [&](const Job& job) {
    SummaryRow row;
    row.config_id = job.cell->config_id;
    row.seed = job.seed;
    try {
      RunResult res = run_all(train, test, static_clouds, static_labels, static_classes,
                              job.cell->ctx, job.seed);
      row.final_train_acc = res.log.final_train_acc;
      row.final_test_acc = res.log.final_test_acc;
      row.gap = res.log.train_test_gap();
      row.params_trainable = model::count_params(res.params).trainable;
      for (const auto& rec : res.log.records)
        if (rec.stage == 1) row.otdd_final = rec.otdd_estimate;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  std::vector<SummaryRow> rows(jobs.size());
  const std::size_t workers = worker_cap();
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) rows[i] = run_job(jobs[i]);
    return rows;
  }
  std::size_t next = 0;
  while (next < jobs.size()) {
    const std::size_t wave = std::min(workers, jobs.size() - next);
    std::vector<std::future<SummaryRow>> futs;
    for (std::size_t w = 0; w < wave; ++w)
      futs.push_back(std::async(std::launch::async, run_job, jobs[next + w]));
    for (std::size_t w = 0; w < wave; ++w) rows[next + w] = futs[w].get();
    next += wave;
  }
  return rows;
}

}  // namespace ata::pipeline

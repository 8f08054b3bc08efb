// Command-line surface for the align-then-adapt laboratory: synthetic data
// generation, dataset distances, two-stage training, ablations, gradient
// checks and report rendering.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ata/config.hpp"
#include "ata/gradcheck.hpp"
#include "ata/io.hpp"
#include "ata/model.hpp"
#include "ata/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ata;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out;
};

io::Config load_config(const CommonArgs& args) {
  io::Config cfg =
      args.config_path.empty() ? io::Config::defaults() : io::Config::from_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::BadConfig, "--set expects key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

model::ModelConfig model_config(const io::Config& cfg, int num_classes_from_data) {
  model::ModelConfig m;
  m.dim = static_cast<std::size_t>(cfg.integer("model.dim"));
  m.blocks = static_cast<std::size_t>(cfg.integer("model.blocks"));
  m.heads = static_cast<std::size_t>(cfg.integer("model.heads"));
  const long ncls = cfg.integer("model.num_classes");
  m.num_classes = static_cast<std::size_t>(ncls > 0 ? ncls : num_classes_from_data);
  m.dropout = cfg.real("model.dropout");
  m.eq4_literal = cfg.boolean("model.eq4_literal");
  m.embedder.num_anchors = static_cast<std::size_t>(cfg.integer("embedder.anchors"));
  m.embedder.spatial_radius = cfg.real("embedder.radius");
  m.embedder.neighbors_k = static_cast<std::size_t>(cfg.integer("embedder.neighbors"));
  m.embedder.tube_length = static_cast<std::size_t>(cfg.integer("embedder.tube"));
  m.embedder.anchor_stride = static_cast<std::size_t>(cfg.integer("embedder.stride"));
  m.embedder.embed_dim = m.dim;
  m.adapter.model_dim = m.dim;
  m.adapter.bottleneck = static_cast<std::size_t>(cfg.integer("adapter.r"));
  m.adapter.kernel = static_cast<std::size_t>(cfg.integer("adapter.kernel"));
  const long depth = cfg.integer("adapter.depth");
  m.adapter.depth = depth < 0 ? m.blocks : static_cast<std::size_t>(depth);
  const std::string act = cfg.str("adapter.activation");
  require(act == "gelu" || act == "relu", ErrorKind::BadConfig,
          "adapter.activation must be gelu or relu");
  m.adapter.activation = act == "gelu" ? nn::Activation::Gelu : nn::Activation::Relu;
  m.adapter.placement = model::parse_placement(cfg.str("adapter.placement"));
  m.adapter.zero_init_up = cfg.boolean("adapter.zero_init_up");
  const std::string axis = cfg.str("adapter.conv_axis");
  require(axis == "temporal" || axis == "flat", ErrorKind::BadConfig,
          "adapter.conv_axis must be temporal or flat");
  m.adapter.conv_over_tokens = axis == "flat";
  m.toggles.pae = cfg.boolean("toggles.pae");
  m.toggles.sce = cfg.boolean("toggles.sce");
  m.toggles.pva = cfg.boolean("toggles.pva");
  return m;
}

pipeline::RunContext run_context(const io::Config& cfg, int num_classes_from_data) {
  pipeline::RunContext ctx;
  ctx.model = model_config(cfg, num_classes_from_data);
  ctx.schedule.stage1_epochs = static_cast<int>(cfg.integer("schedule.stage1_epochs"));
  ctx.schedule.stage2_epochs = static_cast<int>(cfg.integer("schedule.stage2_epochs"));
  ctx.schedule.base_lr = cfg.real("schedule.base_lr");
  ctx.schedule.stage1_lr = cfg.real("schedule.stage1_lr");
  ctx.schedule.warmup_epochs = static_cast<int>(cfg.integer("schedule.warmup_epochs"));
  ctx.schedule.decay_epochs = cfg.int_list("schedule.decay_epochs");
  ctx.schedule.decay_factor = cfg.real("schedule.decay_factor");
  ctx.schedule.momentum = cfg.real("schedule.momentum");
  ctx.schedule.dropout = cfg.real("model.dropout");
  ctx.schedule.batch_size = static_cast<int>(cfg.integer("schedule.batch_size"));
  ctx.align.b = static_cast<int>(cfg.integer("otdd.b"));
  ctx.align.rounds = static_cast<int>(cfg.integer("otdd.rounds"));
  ctx.align.metric = cfg.str("stage1.metric");
  ctx.align.mmd_bandwidth = cfg.real("mmd.bandwidth");
  ctx.align.otdd.p = cfg.real("ot.p");
  ctx.align.otdd.epsilon = cfg.real("ot.epsilon");
  ctx.align.otdd.max_iter = static_cast<int>(cfg.integer("ot.max_iter"));
  ctx.align.otdd.tol = cfg.real("ot.tol");
  ctx.align.otdd.debias = cfg.boolean("ot.debias");
  ctx.align.otdd.normalize_cost = cfg.boolean("ot.normalize_cost");
  const std::string inner = cfg.str("otdd.inner_mode");
  require(inner == "gaussian" || inner == "exact", ErrorKind::BadConfig,
          "otdd.inner_mode must be gaussian or exact");
  ctx.align.otdd.inner = inner == "gaussian" ? otdd::InnerMode::Gaussian : otdd::InnerMode::Exact;
  const std::string solver = cfg.str("otdd.solver");
  require(solver == "sinkhorn" || solver == "exact", ErrorKind::BadConfig,
          "otdd.solver must be sinkhorn or exact");
  ctx.align.otdd.solver =
      solver == "sinkhorn" ? otdd::SolverKind::Sinkhorn : otdd::SolverKind::Exact;
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string sniff_magic(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  return std::string(magic, 4);
}

// Embed a dataset file into labeled features with the frozen initialization
// for the given seed (or a checkpoint when provided).
otdd::LabeledEmbeddingSet embed_file(const std::string& path, const io::Config& cfg,
                                     std::uint64_t seed, const std::string& checkpoint) {
  const std::string magic = sniff_magic(path);
  model::ParamStore store;
  RngState root(seed);
  if (magic == "PC3D") {
    const io::StaticSet set = io::read_static(path);
    model::ModelConfig m = model_config(cfg, set.num_classes);
    if (checkpoint.empty())
      model::init_params(store, m, root);
    else
      store = model::ParamStore::load(checkpoint);
    Tensor feats({set.size(), m.dim});
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Tensor e = model::embed_static(set.clouds[i], store);
      for (std::size_t c = 0; c < m.dim; ++c) feats.at(i, c) = e[c];
    }
    return {std::move(feats), set.labels, set.num_classes};
  }
  require(magic == "PCV4", ErrorKind::BadFile, path + ": expected a PC3D or PCV4 file");
  const io::ClipSet set = io::read_clips(path);
  model::ModelConfig m = model_config(cfg, set.num_classes);
  if (checkpoint.empty())
    model::init_params(store, m, root);
  else
    store = model::ParamStore::load(checkpoint);
  RngState embed_rng = root.fork("distance.embed");
  Tensor feats({set.size(), m.dim});
  for (std::size_t i = 0; i < set.size(); ++i) {
    Tape tape;
    model::Binding binding = model::bind_params(tape, store);
    model::TokenGrid grid = model::embed_dynamic(tape, set.clips[i], m.embedder, binding,
                                                 embed_rng);
    const Tensor pooled = tape.value(tape.mean_rows(grid.tokens));
    for (std::size_t c = 0; c < m.dim; ++c) feats.at(i, c) = pooled[c];
  }
  return {std::move(feats), set.labels, set.num_classes};
}

struct LoadedRun {
  pipeline::ClipDataset train;
  pipeline::ClipDataset test;
  std::vector<Tensor> static_clouds;
  std::vector<int> static_labels;
  int static_classes = 0;
};

LoadedRun load_run_data(const io::Config& cfg, bool need_static, bool need_test) {
  LoadedRun out;
  const std::string train_path = cfg.str("data.dyn_train");
  require(!train_path.empty(), ErrorKind::BadConfig, "data.dyn_train is required");
  out.train = io::read_clips(train_path).dataset();
  if (need_test) {
    const std::string test_path = cfg.str("data.dyn_test");
    require(!test_path.empty(), ErrorKind::BadConfig, "data.dyn_test is required");
    out.test = io::read_clips(test_path).dataset();
  }
  if (need_static) {
    const std::string static_path = cfg.str("data.static");
    require(!static_path.empty(), ErrorKind::BadConfig, "data.static is required");
    io::StaticSet s = io::read_static(static_path);
    out.static_clouds = std::move(s.clouds);
    out.static_labels = std::move(s.labels);
    out.static_classes = s.num_classes;
  }
  return out;
}

int cmd_gen_synth(const CommonArgs& args) {
  const io::Config cfg = load_config(args);
  RngState rng(args.seed);
  const std::string kind = cfg.str("synth.kind");
  const int classes = static_cast<int>(cfg.integer("synth.classes"));
  const int per_class = static_cast<int>(cfg.integer("synth.per_class"));
  const int points = static_cast<int>(cfg.integer("synth.points"));
  const double noise = cfg.real("synth.noise");
  require(!args.out.empty(), ErrorKind::BadConfig, "--out FILE is required");
  if (kind == "static") {
    io::write_static(args.out, io::gen_synth_static(classes, per_class, points, noise, rng));
  } else if (kind == "dynamic") {
    const int frames = static_cast<int>(cfg.integer("synth.frames"));
    const std::string ms = cfg.str("synth.motion_set");
    require(ms == "mixed" || ms == "rotdir", ErrorKind::BadConfig,
            "synth.motion_set must be mixed or rotdir");
    io::write_clips(args.out,
                    io::gen_synth_dynamic(classes, per_class, frames, points, noise,
                                          ms == "mixed" ? io::MotionSet::Mixed
                                                        : io::MotionSet::RotationDirection,
                                          rng));
  } else {
    fail(ErrorKind::BadConfig, "synth.kind must be static or dynamic");
  }
  std::cout << args.out << "\n";
  return 0;
}

int cmd_distance(const CommonArgs& args, const std::string& metric, const std::string& file_a,
                 const std::string& file_b, const std::string& checkpoint) {
  const io::Config cfg = load_config(args);
  const otdd::LabeledEmbeddingSet a = embed_file(file_a, cfg, args.seed, checkpoint);
  const otdd::LabeledEmbeddingSet b = embed_file(file_b, cfg, args.seed, checkpoint);
  pipeline::RunContext ctx = run_context(cfg, a.num_classes);
  double value = 0.0;
  if (metric == "otdd") {
    value = otdd::otdd_exact(a, b, ctx.align.otdd);
  } else if (metric == "otdd-stochastic") {
    RngState rng = RngState(args.seed).fork("distance.stochastic");
    value = otdd::otdd_class_weighted_stochastic(a, b, ctx.align.b, ctx.align.rounds,
                                                 ctx.align.otdd, rng)
                .aggregate;
  } else if (metric == "mmd") {
    value = otdd::mmd(a.features, b.features, ctx.align.mmd_bandwidth);
  } else if (metric == "cka") {
    value = otdd::cka(a.features, b.features);
  } else if (metric == "euclid") {
    value = otdd::mean_euclidean(a.features, b.features);
  } else {
    fail(ErrorKind::BadConfig,
         "--metric must be one of otdd|otdd-stochastic|mmd|cka|euclid");
  }
  std::cout << pipeline::format_sig12(value) << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args, const std::string& stage) {
  const io::Config cfg = load_config(args);
  require(!args.out.empty(), ErrorKind::BadConfig, "--out DIR is required");
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "config.resolved", cfg.echo());

  const bool want_stage1 = stage == "1" || stage == "both";
  const bool want_stage2 = stage == "2" || stage == "both";
  LoadedRun data = load_run_data(cfg, /*need_static=*/want_stage1, /*need_test=*/want_stage2);
  pipeline::RunContext ctx = run_context(cfg, data.train.num_classes);
  if (!want_stage1) ctx.schedule.stage1_epochs = 0;
  if (!want_stage2) ctx.schedule.stage2_epochs = 0;

  pipeline::RunResult res;
  if (want_stage2) {
    res = pipeline::run_all(data.train, data.test, data.static_clouds, data.static_labels,
                            data.static_classes, ctx, args.seed);
  } else {
    // stage 1 only: no test set involved
    RngState root(args.seed);
    model::init_params(res.params, ctx.model, root);
    Tensor stat_feats({data.static_clouds.size(), ctx.model.dim});
    for (std::size_t i = 0; i < data.static_clouds.size(); ++i) {
      const Tensor e = model::embed_static(data.static_clouds[i], res.params);
      for (std::size_t c = 0; c < ctx.model.dim; ++c) stat_feats.at(i, c) = e[c];
    }
    otdd::LabeledEmbeddingSet stat{std::move(stat_feats), data.static_labels,
                                   data.static_classes};
    RngState s1 = root.fork("stage1");
    res.log = pipeline::stage1_align(data.train, stat, res.params, ctx, s1);
  }

  res.log.write((fs::path(args.out) / "metrics.jsonl").string());
  res.params.save((fs::path(args.out) / "checkpoint.ataw").string());
  double total_ms = 0.0;
  for (const auto& r : res.log.records) total_ms += r.wall_ms;
  std::cout << "wrote " << args.out << " (" << res.log.records.size() << " epochs, "
            << static_cast<long>(total_ms) << " ms";
  if (want_stage2)
    std::cout << ", final test acc " << pipeline::format_sig12(res.log.final_test_acc);
  std::cout << ")\n";
  return 0;
}

std::vector<pipeline::AblationCell> build_grid(const io::Config& cfg, const std::string& axis,
                                               int num_classes) {
  std::vector<pipeline::AblationCell> grid;
  auto cell = [&](const std::string& id, auto mutate) {
    pipeline::RunContext ctx = run_context(cfg, num_classes);
    mutate(ctx);
    grid.push_back({id, std::move(ctx)});
  };
  if (axis == "arch") {
    cell("A0", [](pipeline::RunContext& c) {
      c.model.toggles = {false, false, false};
      c.schedule.stage1_epochs = 0;
    });
    cell("A1", [](pipeline::RunContext& c) { c.model.toggles = {true, false, false}; });
    cell("A2", [](pipeline::RunContext& c) { c.model.toggles = {true, true, false}; });
    cell("A3", [](pipeline::RunContext& c) { c.model.toggles = {true, false, true}; });
    cell("A4", [](pipeline::RunContext& c) { c.model.toggles = {true, true, true}; });
  } else if (axis == "placement") {
    for (const char* p : {"bypass", "prepend", "post", "middle"})
      cell(p, [p](pipeline::RunContext& c) { c.model.adapter.placement = model::parse_placement(p); });
  } else if (axis == "metric") {
    for (const char* m : {"otdd", "mmd", "cka", "euclid"})
      cell(m, [m](pipeline::RunContext& c) { c.align.metric = m; });
  } else if (axis == "budget") {
    const std::pair<int, int> cells[] = {{2, 16}, {4, 16}, {6, 32}, {8, 32}, {10, 32}, {12, 64}};
    for (auto [epochs, b] : cells)
      cell("e" + std::to_string(epochs) + "_b" + std::to_string(b),
           [epochs = epochs, b = b](pipeline::RunContext& c) {
             c.schedule.stage1_epochs = epochs;
             c.align.b = b;
           });
  } else if (axis == "kernel") {
    for (int k : {1, 3, 5, 7})
      cell("k" + std::to_string(k),
           [k](pipeline::RunContext& c) { c.model.adapter.kernel = static_cast<std::size_t>(k); });
  } else if (axis == "depth") {
    const std::size_t blocks = run_context(cfg, num_classes).model.blocks;
    for (std::size_t d = 0; d <= blocks; ++d)
      cell("d" + std::to_string(d),
           [d](pipeline::RunContext& c) { c.model.adapter.depth = d; });
  } else {
    fail(ErrorKind::BadConfig,
         "--axis must be one of arch|placement|metric|budget|kernel|depth");
  }
  return grid;
}

std::string toggle_table(const std::vector<pipeline::SummaryRow>& rows) {
  std::ostringstream os;
  os << "config_id  PAE SCE PVA  test_acc      train_acc     gap           trainable\n";
  auto mark = [](bool on) { return on ? " + " : " - "; };
  for (const auto& r : rows) {
    bool pae = r.config_id != "A0";
    bool sce = r.config_id == "A2" || r.config_id == "A4";
    bool pva = r.config_id == "A3" || r.config_id == "A4";
    os << r.config_id << " seed=" << r.seed << "  " << mark(pae) << mark(sce) << mark(pva) << "  ";
    if (!r.error.empty())
      os << "error: " << r.error << "\n";
    else
      os << pipeline::format_sig12(r.final_test_acc) << " "
         << pipeline::format_sig12(r.final_train_acc) << " " << pipeline::format_sig12(r.gap)
         << " " << r.params_trainable << "\n";
  }
  return os.str();
}

int cmd_ablate(const CommonArgs& args, const std::string& axis,
               const std::vector<std::uint64_t>& seeds_arg) {
  const io::Config cfg = load_config(args);
  require(!args.out.empty(), ErrorKind::BadConfig, "--out DIR is required");
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "config.resolved", cfg.echo());
  const std::vector<std::uint64_t> seeds = seeds_arg.empty()
                                               ? std::vector<std::uint64_t>{args.seed}
                                               : seeds_arg;

  // data: from files when configured, otherwise synthesized deterministically
  pipeline::ClipDataset train, test;
  std::vector<Tensor> static_clouds;
  std::vector<int> static_labels;
  int static_classes = 0;
  if (!cfg.str("data.dyn_train").empty()) {
    LoadedRun data = load_run_data(cfg, true, true);
    train = std::move(data.train);
    test = std::move(data.test);
    static_clouds = std::move(data.static_clouds);
    static_labels = std::move(data.static_labels);
    static_classes = data.static_classes;
  } else {
    RngState data_rng = RngState(args.seed).fork("ablate.data");
    const int classes = static_cast<int>(cfg.integer("synth.classes"));
    const int per_class = static_cast<int>(cfg.integer("synth.per_class"));
    const int points = static_cast<int>(cfg.integer("synth.points"));
    const int frames = static_cast<int>(cfg.integer("synth.frames"));
    const double noise = cfg.real("synth.noise");
    const std::string ms = cfg.str("synth.motion_set");
    const io::MotionSet motion =
        ms == "mixed" ? io::MotionSet::Mixed : io::MotionSet::RotationDirection;
    train = io::gen_synth_dynamic(classes, per_class, frames, points, noise, motion, data_rng)
                .dataset();
    test = io::gen_synth_dynamic(classes, std::max(1, per_class / 2), frames, points, noise,
                                 motion, data_rng)
               .dataset();
    io::StaticSet s = io::gen_synth_static(std::max(2, classes), per_class, points, noise,
                                           data_rng);
    static_clouds = std::move(s.clouds);
    static_labels = std::move(s.labels);
    static_classes = s.num_classes;
  }

  const auto grid = build_grid(cfg, axis, train.num_classes);
  const auto rows = pipeline::run_ablation(grid, seeds, train, test, static_clouds,
                                           static_labels, static_classes);
  const std::string csv = pipeline::summary_csv(rows);
  write_text(fs::path(args.out) / "summary.csv", csv);
  std::string table = csv;
  if (axis == "arch") table = toggle_table(rows);
  write_text(fs::path(args.out) / "summary.txt", table);
  std::cout << table;
  return 0;
}

int cmd_gradcheck(int seeds) {
  const auto results = gradcheck::run_all(seeds);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err="
              << pipeline::format_sig12(r.max_rel_err) << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 3;
}

int cmd_report(const std::string& in, const std::string& out) {
  fs::create_directories(out);
  if (fs::is_directory(in)) {
    const fs::path csv_path = fs::path(in) / "summary.csv";
    require(fs::exists(csv_path), ErrorKind::BadFile,
            in + " has no summary.csv; point --in at an ablation directory or a metrics.jsonl");
    std::ifstream f(csv_path);
    std::stringstream ss;
    ss << f.rdbuf();
    write_text(fs::path(out) / "summary.csv", ss.str());
    write_text(fs::path(out) / "summary.txt", ss.str());
    std::cout << ss.str();
    return 0;
  }
  const pipeline::MetricLog log = pipeline::MetricLog::from_jsonl_file(in);
  std::ostringstream csv;
  csv << "stage,epoch,train_loss,train_acc,test_acc,otdd_estimate,lr\n";
  for (const auto& r : log.records)
    csv << r.stage << "," << r.epoch << "," << pipeline::format_sig12(r.train_loss) << ","
        << pipeline::format_sig12(r.train_acc) << "," << pipeline::format_sig12(r.test_acc) << ","
        << pipeline::format_sig12(r.otdd_estimate) << "," << pipeline::format_sig12(r.lr) << "\n";
  write_text(fs::path(out) / "report.csv", csv.str());
  std::ostringstream txt;
  txt << "epochs: " << log.records.size() << "\n"
      << "final train acc: " << pipeline::format_sig12(log.final_train_acc) << "\n"
      << "final test acc:  " << pipeline::format_sig12(log.final_test_acc) << "\n"
      << "train-test gap:  " << pipeline::format_sig12(log.train_test_gap()) << "\n";
  write_text(fs::path(out) / "summary.txt", txt.str());
  std::cout << txt.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"align-then-adapt point cloud transfer laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string metric = "otdd", stage = "both", axis = "arch", checkpoint, file_a, file_b;
  std::string report_in, report_out = ".";
  std::vector<std::uint64_t> seeds_list;
  int gradcheck_seeds = 10;

  auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", args.config_path, "config file (key=value lines)");
    cmd->add_option("--set", args.overrides, "override a config key (key=value), repeatable");
    cmd->add_option("--seed", args.seed, "base RNG seed");
    if (with_out) cmd->add_option("--out", args.out, "output path");
  };

  CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic PC3D/PCV4 file");
  add_common(gen, true);

  CLI::App* dist = app.add_subcommand("distance", "dataset distance between two files");
  add_common(dist, false);
  dist->add_option("--metric", metric, "otdd|otdd-stochastic|mmd|cka|euclid");
  dist->add_option("--checkpoint", checkpoint, "embed with parameters from this checkpoint");
  dist->add_option("file_a", file_a, "first dataset")->required();
  dist->add_option("file_b", file_b, "second dataset")->required();

  CLI::App* align = app.add_subcommand("align", "stage 1 only: embedder alignment");
  add_common(align, true);
  CLI::App* adapt = app.add_subcommand("adapt", "stage 2 only: adapter tuning");
  add_common(adapt, true);
  CLI::App* run = app.add_subcommand("run", "full two-stage run");
  add_common(run, true);
  run->add_option("--stage", stage, "1|2|both");

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation grid");
  add_common(ablate, true);
  ablate->add_option("--axis", axis, "arch|placement|metric|budget|kernel|depth");
  ablate->add_option("--seeds", seeds_list, "run seeds (space separated)");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seeds", gradcheck_seeds, "random seeds per primitive");

  CLI::App* report = app.add_subcommand("report", "render a metrics log or ablation directory");
  report->add_option("--in", report_in, "metrics.jsonl or ablation directory")->required();
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(args);
    if (dist->parsed()) return cmd_distance(args, metric, file_a, file_b, checkpoint);
    if (align->parsed()) return cmd_run(args, "1");
    if (adapt->parsed()) return cmd_run(args, "2");
    if (run->parsed()) return cmd_run(args, stage);
    if (ablate->parsed()) return cmd_ablate(args, axis, seeds_list);
    if (gc->parsed()) return cmd_gradcheck(gradcheck_seeds);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

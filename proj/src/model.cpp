#include "ata/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ata::model {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'A', 'W'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require(pos + n <= buf.size(), ErrorKind::BadFile, "checkpoint truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape,
                      RngState& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

std::string block_name(const char* module, std::size_t block, const char* param) {
  return std::string(module) + "." + std::to_string(block) + "." + param;
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor init, bool frozen) {
  require(!lookup_.count(name), ErrorKind::ShapeMismatch, "duplicate parameter " + name);
  lookup_[name] = entries_.size();
  names_.push_back(name);
  entries_.push_back(Entry{std::move(init), frozen});
  return entries_.back().value;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = lookup_.find(name);
  require(it != lookup_.end(), ErrorKind::MissingLabelEntry, "unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) { return entries_[index(name)].value; }
const Tensor& ParamStore::at(const std::string& name) const { return entries_[index(name)].value; }
bool ParamStore::has(const std::string& name) const { return lookup_.count(name) > 0; }
bool ParamStore::frozen(const std::string& name) const { return entries_[index(name)].frozen; }
void ParamStore::set_frozen(const std::string& name, bool frozen) {
  entries_[index(name)].frozen = frozen;
}

void ParamStore::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const std::string& name = names_[k];
    const Entry& e = entries_[k];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(e.frozen ? 1 : 0);
    out.push_back(static_cast<char>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : e.value.vec()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorKind::BadFile, "short write to " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};
  require(r.bytes(4) == std::string(kMagic, 4), ErrorKind::BadFile, "bad checkpoint magic");
  require(r.u16() == kVersion, ErrorKind::BadFile, "unsupported checkpoint version");
  const std::uint32_t count = r.u32();
  require(count <= (1u << 20), ErrorKind::BadFile, "checkpoint entry count over cap");
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32();
    require(name_len >= 1 && name_len <= 4096, ErrorKind::BadFile, "bad parameter name length");
    const std::string name = r.bytes(name_len);
    const bool frozen = r.bytes(1)[0] != 0;
    const std::uint8_t rank = static_cast<std::uint8_t>(r.bytes(1)[0]);
    require(rank <= 8, ErrorKind::BadFile, "parameter rank over cap");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u32();
      require(d <= (1u << 24), ErrorKind::BadFile, "parameter extent over cap");
      numel *= d;
    }
    require(numel <= (1u << 26), ErrorKind::BadFile, "parameter size over cap");
    r.need(numel * 8);
    Tensor t(shape);
    for (std::size_t i = 0; i < numel; ++i) t[i] = r.f64();
    store.add(name, std::move(t), frozen);
  }
  require(r.pos == buf.size(), ErrorKind::BadFile, "trailing bytes in checkpoint");
  return store;
}

std::string ParamStore::frozen_digest() const {
  std::string bytes;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (!entries_[k].frozen) continue;
    bytes.append(names_[k]);
    const auto& v = entries_[k].value.vec();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return bytes;
}

ParamCounts count_params(const ParamStore& store) {
  ParamCounts out;
  for (const std::string& name : store.names()) {
    const std::size_t n = store.at(name).numel();
    out.total += n;
    if (store.frozen(name))
      out.frozen += n;
    else
      out.trainable += n;
    out.per_module[name.substr(0, name.find('.'))] += n;
  }
  return out;
}

void EmbedderConfig::validate() const {
  require(tube_length % 2 == 1, ErrorKind::EvenKernel, "tube length must be odd");
  require(anchor_stride >= 1, ErrorKind::ShapeMismatch, "anchor stride must be >= 1");
  require(neighbors_k >= 1, ErrorKind::ShapeMismatch, "neighbors_k must be >= 1");
  require(num_anchors >= 1, ErrorKind::ShapeMismatch, "num_anchors must be >= 1");
  require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::ShapeMismatch,
          "embed_dim must be even and >= 2");
}

Placement parse_placement(const std::string& s) {
  if (s == "bypass") return Placement::Bypass;
  if (s == "prepend") return Placement::Prepend;
  if (s == "post") return Placement::Post;
  if (s == "middle") return Placement::Middle;
  fail(ErrorKind::UnknownPlacement, "unknown placement '" + s + "'");
}

std::string placement_name(Placement p) {
  switch (p) {
    case Placement::Bypass: return "bypass";
    case Placement::Prepend: return "prepend";
    case Placement::Post: return "post";
    case Placement::Middle: return "middle";
  }
  return "bypass";
}

void AdapterConfig::validate() const {
  require(bottleneck < model_dim, ErrorKind::ShapeMismatch,
          "bottleneck must be smaller than the model width");
  require(kernel % 2 == 1, ErrorKind::EvenKernel, "adapter kernel must be odd");
}

void init_params(ParamStore& store, const ModelConfig& cfg, RngState& rng) {
  cfg.embedder.validate();
  cfg.adapter.validate();
  require(cfg.dim == cfg.embedder.embed_dim, ErrorKind::ShapeMismatch,
          "embedder width must match the backbone width");
  require(cfg.dim % cfg.heads == 0, ErrorKind::DivisibilityError,
          "model width must be divisible by head count");
  const std::size_t d = cfg.dim, hidden = 4 * d, e2 = d / 2;

  {
    RngState r = rng.fork("init.static_embedder");
    store.add("fs.w1", xavier_uniform(3, e2, {3, e2}, r), true);
    store.add("fs.b1", Tensor({e2}), true);
    store.add("fs.w2", xavier_uniform(e2, d, {e2, d}, r), true);
    store.add("fs.b2", Tensor({d}), true);
  }
  {
    RngState r = rng.fork("init.dynamic_embedder");
    const bool frozen = !cfg.toggles.pae;
    store.add("fd.w1", xavier_uniform(4, e2, {4, e2}, r), frozen);
    store.add("fd.b1", Tensor({e2}), frozen);
    store.add("fd.w2", xavier_uniform(e2, d, {e2, d}, r), frozen);
    store.add("fd.b2", Tensor({d}), frozen);
  }
  {
    RngState r = rng.fork("init.backbone");
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
      store.add(block_name("bb", i, "ln1.g"), Tensor::full({d}, 1.0), true);
      store.add(block_name("bb", i, "ln1.b"), Tensor({d}), true);
      for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
        store.add(block_name("bb", i, w), xavier_uniform(d, d, {d, d}, r), true);
      for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
        store.add(block_name("bb", i, b), Tensor({d}), true);
      store.add(block_name("bb", i, "ln2.g"), Tensor::full({d}, 1.0), true);
      store.add(block_name("bb", i, "ln2.b"), Tensor({d}), true);
      store.add(block_name("bb", i, "ffn.w1"), xavier_uniform(d, hidden, {d, hidden}, r), true);
      store.add(block_name("bb", i, "ffn.b1"), Tensor({hidden}), true);
      store.add(block_name("bb", i, "ffn.w2"), xavier_uniform(hidden, d, {hidden, d}, r), true);
      store.add(block_name("bb", i, "ffn.b2"), Tensor({d}), true);
    }
  }
  {
    RngState r = rng.fork("init.adapters");
    const std::size_t depth = std::min(cfg.adapter.depth, cfg.blocks);
    const std::size_t rr = cfg.adapter.bottleneck, kk = cfg.adapter.kernel;
    for (std::size_t i = 0; i < depth; ++i) {
      if (cfg.toggles.pva) {
        store.add(block_name("pva", i, "wdown"), xavier_uniform(d, rr, {d, rr}, r), false);
        store.add(block_name("pva", i, "bdown"), Tensor({rr}), false);
        store.add(block_name("pva", i, "wdepth"), xavier_uniform(kk, 1, {rr, kk}, r), false);
        store.add(block_name("pva", i, "wpoint"), xavier_uniform(rr, rr, {rr, rr}, r), false);
        store.add(block_name("pva", i, "wup"),
                  cfg.adapter.zero_init_up ? Tensor({rr, d}) : xavier_uniform(rr, d, {rr, d}, r),
                  false);
        store.add(block_name("pva", i, "bup"), Tensor({d}), false);
      }
      if (cfg.toggles.sce) {
        store.add(block_name("sce", i, "w1"), xavier_uniform(d, hidden, {d, hidden}, r), false);
        store.add(block_name("sce", i, "b1"), Tensor({hidden}), false);
        store.add(block_name("sce", i, "w2"),
                  cfg.adapter.zero_init_up ? Tensor({hidden, d})
                                           : xavier_uniform(hidden, d, {hidden, d}, r),
                  false);
        store.add(block_name("sce", i, "b2"), Tensor({d}), false);
      }
    }
  }
  {
    // zero-init head: logits start at zero so the first loss is exactly ln K
    store.add("head.w", Tensor({d, cfg.num_classes}), false);
    store.add("head.b", Tensor({cfg.num_classes}), false);
  }
}

ValueId Binding::at(const std::string& name) const {
  auto it = ids.find(name);
  require(it != ids.end(), ErrorKind::MissingLabelEntry, "parameter not bound: " + name);
  return it->second;
}

Binding bind_params(Tape& tape, const ParamStore& store) {
  Binding b;
  for (const std::string& name : store.names()) b.ids[name] = tape.leaf(store.at(name));
  return b;
}

std::map<std::string, Tensor> masked_gradients(const Binding& binding, const ParamStore& store,
                                               const std::map<ValueId, Tensor>& grads) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : binding.ids) {
    auto it = grads.find(id);
    if (it == grads.end()) continue;
    if (store.frozen(name))
      out.emplace(name, Tensor::zeros(it->second.shape()));
    else
      out.emplace(name, it->second);
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t count,
                                               std::size_t start) {
  const std::size_t n = points.rows();
  require(count <= n, ErrorKind::TooFewPoints, "farthest-point sample larger than the cloud");
  require(start < n, ErrorKind::TooFewPoints, "start index out of range");
  std::vector<std::size_t> picked{start};
  std::vector<double> best(n);
  auto sq_to = [&](std::size_t a, std::size_t b) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = points.at(a, c) - points.at(b, c);
      sq += d * d;
    }
    return sq;
  };
  for (std::size_t i = 0; i < n; ++i) best[i] = sq_to(i, start);
  while (picked.size() < count) {
    std::size_t far = 0;
    double fv = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      if (best[i] > fv) {  // strict: ties keep the lowest index
        fv = best[i];
        far = i;
      }
    picked.push_back(far);
    for (std::size_t i = 0; i < n; ++i) best[i] = std::min(best[i], sq_to(i, far));
  }
  return picked;
}

namespace {

// Plain two-layer point MLP with max-pool over rows: rows -> 1 x e.
Tensor pointnet_pool(const Tensor& rows, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                     const Tensor& b2) {
  Tensor h = matmul(rows, w1);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) {
      const double x = h.at(i, j) + b1[j];
      h.at(i, j) = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    }
  Tensor z = matmul(h, w2);
  const std::size_t e = z.cols();
  Tensor out({1, e});
  for (std::size_t j = 0; j < e; ++j) {
    double mx = z.at(0, j) + b2[j];
    for (std::size_t i = 1; i < z.rows(); ++i) mx = std::max(mx, z.at(i, j) + b2[j]);
    out[j] = mx;
  }
  return out;
}

struct NeighborhoodFeatures {
  Tensor rows;                        // total_points x 4 displacement features
  std::vector<std::size_t> offsets;   // per-token segments, size tokens + 1
  std::size_t frames = 0;
  std::size_t anchors = 0;
};

NeighborhoodFeatures gather_tube_features(const Tensor& clip, const EmbedderConfig& cfg,
                                          std::size_t fps_start) {
  const std::size_t T = clip.dim(0), P = clip.dim(1);
  require(T >= cfg.tube_length, ErrorKind::ClipTooShort,
          "clip shorter than the temporal tube");
  require(P >= cfg.num_anchors, ErrorKind::TooFewPoints, "fewer points than anchors");
  const std::size_t half = (cfg.tube_length - 1) / 2;
  const double r2 = cfg.spatial_radius * cfg.spatial_radius;

  NeighborhoodFeatures out;
  out.anchors = cfg.num_anchors;
  std::vector<double> rows;
  out.offsets.push_back(0);

  for (std::size_t tf = 0; tf < T; tf += cfg.anchor_stride) {
    ++out.frames;
    Tensor frame({P, 3});
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t c = 0; c < 3; ++c) frame.at(i, c) = clip.at(tf, i, c);
    const auto anchors = farthest_point_sample(frame, cfg.num_anchors, fps_start);

    for (std::size_t a : anchors) {
      const double ax = frame.at(a, 0), ay = frame.at(a, 1), az = frame.at(a, 2);
      const std::size_t row_begin = rows.size() / 4;
      const std::size_t lo = tf >= half ? tf - half : 0;
      const std::size_t hi = std::min(T - 1, tf + half);
      for (std::size_t f = lo; f <= hi; ++f) {
        // nearest in-radius points of this tube frame, ties by lowest index
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t i = 0; i < P; ++i) {
          const double dx = clip.at(f, i, 0) - ax;
          const double dy = clip.at(f, i, 1) - ay;
          const double dz = clip.at(f, i, 2) - az;
          const double sq = dx * dx + dy * dy + dz * dz;
          if (sq <= r2) cand.emplace_back(sq, i);
        }
        std::sort(cand.begin(), cand.end());
        if (cand.size() > cfg.neighbors_k) cand.resize(cfg.neighbors_k);
        if (cand.empty()) {
          // empty neighborhood falls back to the anchor itself: zero feature
          rows.insert(rows.end(), {0.0, 0.0, 0.0, 0.0});
          continue;
        }
        for (const auto& [sq, i] : cand) {
          rows.push_back(clip.at(f, i, 0) - ax);
          rows.push_back(clip.at(f, i, 1) - ay);
          rows.push_back(clip.at(f, i, 2) - az);
          rows.push_back(static_cast<double>(f) - static_cast<double>(tf));
        }
      }
      require(rows.size() / 4 > row_begin, ErrorKind::TooFewPoints, "empty anchor tube");
      out.offsets.push_back(rows.size() / 4);
    }
  }
  const std::size_t n_rows = rows.size() / 4;
  out.rows = Tensor({n_rows, 4}, std::move(rows));
  return out;
}

}  // namespace

Tensor embed_static(const Tensor& cloud, const ParamStore& store) {
  require(cloud.rank() == 2 && cloud.cols() == 3, ErrorKind::ShapeMismatch,
          "cloud must be P x 3");
  require(cloud.rows() >= 1, ErrorKind::EmptyCloud, "cloud has no points");
  return pointnet_pool(cloud, store.at("fs.w1"), store.at("fs.b1"), store.at("fs.w2"),
                       store.at("fs.b2"));
}

Tensor embed_static_anchors(const Tensor& cloud, const EmbedderConfig& cfg,
                            const ParamStore& store, RngState& rng) {
  require(cloud.rank() == 2 && cloud.cols() == 3, ErrorKind::ShapeMismatch,
          "cloud must be P x 3");
  require(cloud.rows() >= 1, ErrorKind::EmptyCloud, "cloud has no points");
  const std::size_t P = cloud.rows();
  require(P >= cfg.num_anchors, ErrorKind::TooFewPoints, "fewer points than anchors");
  const std::size_t start = static_cast<std::size_t>(rng.uniform_int(P));
  const auto anchors = farthest_point_sample(cloud, cfg.num_anchors, start);
  const double r2 = cfg.spatial_radius * cfg.spatial_radius;
  Tensor out({anchors.size(), store.at("fs.w2").cols()});
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const std::size_t a = anchors[k];
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < P; ++i) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = cloud.at(i, c) - cloud.at(a, c);
        sq += d * d;
      }
      if (sq <= r2) cand.emplace_back(sq, i);
    }
    std::sort(cand.begin(), cand.end());
    if (cand.size() > cfg.neighbors_k) cand.resize(cfg.neighbors_k);
    Tensor rows({cand.size(), 3});
    for (std::size_t i = 0; i < cand.size(); ++i)
      for (std::size_t c = 0; c < 3; ++c)
        rows.at(i, c) = cloud.at(cand[i].second, c) - cloud.at(a, c);
    Tensor pooled = pointnet_pool(rows, store.at("fs.w1"), store.at("fs.b1"),
                                  store.at("fs.w2"), store.at("fs.b2"));
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(k, j) = pooled[j];
  }
  return out;
}

TokenGrid embed_dynamic(Tape& tape, const Tensor& clip, const EmbedderConfig& cfg,
                        const Binding& binding, RngState& rng) {
  cfg.validate();
  require(clip.rank() == 3 && clip.dim(2) == 3, ErrorKind::ShapeMismatch,
          "clip must be T x P x 3");
  const std::size_t fps_start = static_cast<std::size_t>(rng.uniform_int(clip.dim(1)));
  NeighborhoodFeatures nf = gather_tube_features(clip, cfg, fps_start);

  const ValueId feats = tape.leaf(std::move(nf.rows));
  const ValueId h = tape.gelu(tape.linear(feats, binding.at("fd.w1"), binding.at("fd.b1")));
  const ValueId z = tape.linear(h, binding.at("fd.w2"), binding.at("fd.b2"));
  TokenGrid grid;
  grid.tokens = tape.segment_max(z, std::move(nf.offsets));
  grid.frames = nf.frames;
  grid.anchors = nf.anchors;
  return grid;
}

ValueId pva_forward(Tape& tape, ValueId x, std::size_t frames, std::size_t anchors,
                    const AdapterConfig& cfg, const Binding& binding, std::size_t block) {
  const Tensor& vx = tape.value(x);
  require(vx.rank() == 2 && vx.rows() == frames * anchors && vx.cols() == cfg.model_dim,
          ErrorKind::ShapeMismatch, "adapter input must be (frames*anchors) x dim");
  const ValueId down = tape.linear(x, binding.at(block_name("pva", block, "wdown")),
                                   binding.at(block_name("pva", block, "bdown")));
  const std::size_t T = cfg.conv_over_tokens ? frames * anchors : frames;
  const std::size_t N = cfg.conv_over_tokens ? 1 : anchors;
  ValueId u = tape.reshape(down, {T, N, cfg.bottleneck});
  u = tape.dwsep_conv(u, binding.at(block_name("pva", block, "wdepth")),
                      binding.at(block_name("pva", block, "wpoint")));
  u = tape.reshape(u, {frames * anchors, cfg.bottleneck});
  u = nn::activate(tape, u, cfg.activation);
  const ValueId up = tape.linear(u, binding.at(block_name("pva", block, "wup")),
                                 binding.at(block_name("pva", block, "bup")));
  return tape.add(x, up);
}

ValueId sce_forward(Tape& tape, ValueId x, const Binding& binding, std::size_t block) {
  const ValueId h = tape.gelu(tape.linear(x, binding.at(block_name("sce", block, "w1")),
                                          binding.at(block_name("sce", block, "b1"))));
  return tape.linear(h, binding.at(block_name("sce", block, "w2")),
                     binding.at(block_name("sce", block, "b2")));
}

namespace {

constexpr double kLnEps = 1e-5;

// Attention sublayer: F + MHSA(LN(F)); the literal reading drops the skip.
ValueId attention_sublayer(Tape& tape, ValueId x, std::size_t block, const ModelConfig& cfg,
                           const Binding& binding) {
  const ValueId normed = tape.layer_norm(x, binding.at(block_name("bb", block, "ln1.g")),
                                         binding.at(block_name("bb", block, "ln1.b")), kLnEps);
  const ValueId q = tape.linear(normed, binding.at(block_name("bb", block, "attn.wq")),
                                binding.at(block_name("bb", block, "attn.bq")));
  const ValueId k = tape.linear(normed, binding.at(block_name("bb", block, "attn.wk")),
                                binding.at(block_name("bb", block, "attn.bk")));
  const ValueId v = tape.linear(normed, binding.at(block_name("bb", block, "attn.wv")),
                                binding.at(block_name("bb", block, "attn.bv")));
  const ValueId att = nn::softmax_attention(tape, q, k, v, cfg.heads);
  const ValueId proj = tape.linear(att, binding.at(block_name("bb", block, "attn.wo")),
                                   binding.at(block_name("bb", block, "attn.bo")));
  return cfg.eq4_literal ? proj : tape.add(x, proj);
}

// FFN sublayer: MLP(LN(G)); no inner skip, the residual comes from outside.
ValueId ffn_sublayer(Tape& tape, ValueId x, std::size_t block, const Binding& binding) {
  const ValueId normed = tape.layer_norm(x, binding.at(block_name("bb", block, "ln2.g")),
                                         binding.at(block_name("bb", block, "ln2.b")), kLnEps);
  const ValueId h = tape.gelu(tape.linear(normed, binding.at(block_name("bb", block, "ffn.w1")),
                                          binding.at(block_name("bb", block, "ffn.b1"))));
  return tape.linear(h, binding.at(block_name("bb", block, "ffn.w2")),
                     binding.at(block_name("bb", block, "ffn.b2")));
}

ValueId reference_block(Tape& tape, ValueId x, std::size_t block, const ModelConfig& cfg,
                        const Binding& binding) {
  const ValueId g = attention_sublayer(tape, x, block, cfg, binding);
  return tape.add(ffn_sublayer(tape, g, block, binding), x);
}

}  // namespace

ValueId block_forward(Tape& tape, ValueId tokens, std::size_t frames, std::size_t anchors,
                      std::size_t block, const ModelConfig& cfg, const Binding& binding) {
  const bool has_pva = cfg.toggles.pva && block < cfg.adapter.depth;
  const bool has_sce = cfg.toggles.sce && block < cfg.adapter.depth;
  if (!has_pva && !has_sce) return reference_block(tape, tokens, block, cfg, binding);

  auto pva = [&](ValueId x) {
    return has_pva ? pva_forward(tape, x, frames, anchors, cfg.adapter, binding, block) : x;
  };
  auto sce_add = [&](ValueId x, ValueId base) {
    return has_sce ? tape.add(base, sce_forward(tape, x, binding, block)) : base;
  };

  switch (cfg.adapter.placement) {
    case Placement::Bypass: {
      const ValueId g = attention_sublayer(tape, tokens, block, cfg, binding);
      const ValueId main = ffn_sublayer(tape, g, block, binding);
      return sce_add(tokens, tape.add(main, pva(tokens)));
    }
    case Placement::Prepend: {
      const ValueId pre = pva(sce_add(tokens, tokens));
      return reference_block(tape, pre, block, cfg, binding);
    }
    case Placement::Post: {
      const ValueId g = reference_block(tape, tokens, block, cfg, binding);
      return sce_add(g, pva(g));
    }
    case Placement::Middle: {
      const ValueId g = attention_sublayer(tape, tokens, block, cfg, binding);
      const ValueId mid = sce_add(g, pva(g));
      return tape.add(ffn_sublayer(tape, mid, block, binding), tokens);
    }
  }
  fail(ErrorKind::UnknownPlacement, "unhandled placement");
}

ValueId model_forward(Tape& tape, const Tensor& clip, const ModelConfig& cfg,
                      const Binding& binding, RngState& rng, bool training,
                      RngState* dropout_rng) {
  TokenGrid grid = embed_dynamic(tape, clip, cfg.embedder, binding, rng);
  ValueId tokens = grid.tokens;
  for (std::size_t i = 0; i < cfg.blocks; ++i)
    tokens = block_forward(tape, tokens, grid.frames, grid.anchors, i, cfg, binding);
  // max over tokens: sparse discriminative activations survive pooling
  ValueId pooled = tape.segment_max(tokens, {0, tape.value(tokens).rows()});
  if (training && cfg.dropout > 0.0) {
    RngState& r = dropout_rng ? *dropout_rng : rng;
    pooled = tape.dropout(pooled, nn::dropout_mask({1, cfg.dim}, cfg.dropout, r));
  }
  return tape.linear(pooled, binding.at("head.w"), binding.at("head.b"));
}

}  // namespace ata::model

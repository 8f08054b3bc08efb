#include "ata/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace ata::io {

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr std::uint32_t kMaxCount = 1u << 20;
constexpr std::uint32_t kMaxPoints = 1u << 20;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require(pos + n <= buf.size(), ErrorKind::BadFile, "file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
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
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::BadFile, "cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorKind::BadFile, "short write to " + path);
}

void check_labels(const std::vector<int>& labels, int num_classes) {
  for (int y : labels)
    require(y >= 0 && y < num_classes, ErrorKind::BadFile, "label outside declared class count");
}

}  // namespace

void write_static(const std::string& path, const StaticSet& set) {
  require(!set.clouds.empty() && set.clouds.size() == set.labels.size(), ErrorKind::EmptyDataset,
          "static set must have one label per cloud");
  check_labels(set.labels, set.num_classes);
  const std::size_t points = set.clouds.front().rows();
  std::string out;
  out.append("PC3D", 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(set.clouds.size()));
  put_u32(out, static_cast<std::uint32_t>(points));
  out.push_back(3);
  put_u32(out, static_cast<std::uint32_t>(set.num_classes));
  for (int y : set.labels) put_u32(out, static_cast<std::uint32_t>(y));
  for (const Tensor& cloud : set.clouds) {
    require(cloud.rank() == 2 && cloud.rows() == points && cloud.cols() == 3,
            ErrorKind::ShapeMismatch, "all clouds must share the declared shape");
    for (double v : cloud.vec()) put_f32(out, static_cast<float>(v));
  }
  write_file(path, out);
}

StaticSet read_static(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  require(r.bytes(4) == "PC3D", ErrorKind::BadFile, "bad magic, expected PC3D");
  require(r.u16() == kVersion, ErrorKind::BadFile, "unsupported PC3D version");
  const std::uint32_t count = r.u32();
  const std::uint32_t points = r.u32();
  const std::uint8_t channels = r.u8();
  const std::uint32_t num_classes = r.u32();
  require(count >= 1 && count <= kMaxCount, ErrorKind::BadFile, "cloud count out of range");
  require(points >= 1 && points <= kMaxPoints, ErrorKind::BadFile, "point count out of range");
  require(channels == 3, ErrorKind::BadFile, "PC3D requires 3 channels");
  require(num_classes >= 1 && num_classes <= kMaxCount, ErrorKind::BadFile,
          "class count out of range");
  // declared sizes must match the actual file length before any payload
  // allocation happens
  const std::size_t expect = r.pos + 4ull * count + 4ull * count * points * channels;
  require(buf.size() == expect, ErrorKind::BadFile, "payload length does not match header");

  StaticSet set;
  set.num_classes = static_cast<int>(num_classes);
  set.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) set.labels.push_back(static_cast<int>(r.u32()));
  check_labels(set.labels, set.num_classes);
  set.clouds.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor cloud({points, 3});
    for (std::size_t k = 0; k < cloud.numel(); ++k) cloud[k] = static_cast<double>(r.f32());
    set.clouds.push_back(std::move(cloud));
  }
  return set;
}

void write_clips(const std::string& path, const ClipSet& set) {
  require(!set.clips.empty() && set.clips.size() == set.labels.size(), ErrorKind::EmptyDataset,
          "clip set must have one label per clip");
  check_labels(set.labels, set.num_classes);
  const std::size_t frames = set.clips.front().dim(0);
  const std::size_t points = set.clips.front().dim(1);
  std::string out;
  out.append("PCV4", 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(set.clips.size()));
  put_u16(out, static_cast<std::uint16_t>(frames));
  put_u32(out, static_cast<std::uint32_t>(points));
  out.push_back(3);
  put_u32(out, static_cast<std::uint32_t>(set.num_classes));
  for (int y : set.labels) put_u32(out, static_cast<std::uint32_t>(y));
  for (const Tensor& clip : set.clips) {
    require(clip.rank() == 3 && clip.dim(0) == frames && clip.dim(1) == points &&
                clip.dim(2) == 3,
            ErrorKind::ShapeMismatch, "all clips must share the declared shape");
    for (double v : clip.vec()) put_f32(out, static_cast<float>(v));
  }
  write_file(path, out);
}

ClipSet read_clips(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  require(r.bytes(4) == "PCV4", ErrorKind::BadFile, "bad magic, expected PCV4");
  require(r.u16() == kVersion, ErrorKind::BadFile, "unsupported PCV4 version");
  const std::uint32_t count = r.u32();
  const std::uint16_t frames = r.u16();
  const std::uint32_t points = r.u32();
  const std::uint8_t channels = r.u8();
  const std::uint32_t num_classes = r.u32();
  require(count >= 1 && count <= kMaxCount, ErrorKind::BadFile, "clip count out of range");
  require(frames >= 1, ErrorKind::BadFile, "frame count out of range");
  require(points >= 1 && points <= kMaxPoints, ErrorKind::BadFile, "point count out of range");
  require(channels == 3, ErrorKind::BadFile, "PCV4 requires 3 channels");
  require(num_classes >= 1 && num_classes <= kMaxCount, ErrorKind::BadFile,
          "class count out of range");
  const std::size_t expect =
      r.pos + 4ull * count + 4ull * count * frames * points * channels;
  require(buf.size() == expect, ErrorKind::BadFile, "payload length does not match header");

  ClipSet set;
  set.num_classes = static_cast<int>(num_classes);
  set.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) set.labels.push_back(static_cast<int>(r.u32()));
  check_labels(set.labels, set.num_classes);
  set.clips.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor clip({frames, points, 3});
    for (std::size_t k = 0; k < clip.numel(); ++k) clip[k] = static_cast<double>(r.f32());
    set.clips.push_back(std::move(clip));
  }
  return set;
}

namespace {

constexpr int kNumPrimitives = 16;

void unit_dir(RngState& rng, double* d) {
  while (true) {
    const double x = rng.normal(), y = rng.normal(), z = rng.normal();
    const double n = std::sqrt(x * x + y * y + z * z);
    if (n < 1e-9) continue;
    d[0] = x / n;
    d[1] = y / n;
    d[2] = z / n;
    return;
  }
}

// Surface samplers write one point into p. The sphere sampler is handled
// separately so antipodal pairing keeps the sample centroid at the origin.
void sample_primitive(int prim, RngState& rng, double* p) {
  switch (prim) {
    case 1: {  // cube surface
      const int face = static_cast<int>(rng.uniform_int(6));
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      const double s = face % 2 == 0 ? 1.0 : -1.0;
      if (face / 2 == 0) { p[0] = s; p[1] = u; p[2] = v; }
      else if (face / 2 == 1) { p[0] = u; p[1] = s; p[2] = v; }
      else { p[0] = u; p[1] = v; p[2] = s; }
      break;
    }
    case 2: {  // cylinder side
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      p[0] = std::cos(th);
      p[1] = std::sin(th);
      p[2] = rng.uniform(-1.0, 1.0);
      break;
    }
    case 3:  // plane patch
      p[0] = rng.uniform(-1.0, 1.0);
      p[1] = rng.uniform(-1.0, 1.0);
      p[2] = 0.0;
      break;
    case 4: {  // torus
      const double th = rng.uniform(0.0, 2.0 * M_PI), ph = rng.uniform(0.0, 2.0 * M_PI);
      const double w = 1.0 + 0.4 * std::cos(ph);
      p[0] = w * std::cos(th);
      p[1] = w * std::sin(th);
      p[2] = 0.4 * std::sin(ph);
      break;
    }
    case 5: {  // cone lateral surface
      const double t = std::sqrt(rng.uniform());
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      p[0] = t * std::cos(th);
      p[1] = t * std::sin(th);
      p[2] = 1.0 - t;
      break;
    }
    case 6: {  // ellipsoid
      double d[3];
      unit_dir(rng, d);
      p[0] = d[0];
      p[1] = 0.6 * d[1];
      p[2] = 0.3 * d[2];
      break;
    }
    case 7: {  // disk
      const double r = std::sqrt(rng.uniform());
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      p[0] = r * std::cos(th);
      p[1] = r * std::sin(th);
      p[2] = 0.0;
      break;
    }
    case 8: {  // helix
      const double t = rng.uniform(0.0, 4.0 * M_PI);
      p[0] = std::cos(t);
      p[1] = std::sin(t);
      p[2] = t / (2.0 * M_PI) - 1.0;
      break;
    }
    case 9: {  // ring
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      p[0] = std::cos(th);
      p[1] = std::sin(th);
      p[2] = 0.0;
      break;
    }
    case 10: {  // saddle
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      p[0] = u;
      p[1] = v;
      p[2] = 0.6 * (u * u - v * v);
      break;
    }
    case 11: {  // wave sheet
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      p[0] = u;
      p[1] = v;
      p[2] = 0.3 * std::sin(2.0 * M_PI * u);
      break;
    }
    case 12: {  // three orthogonal bars
      const int bar = static_cast<int>(rng.uniform_int(3));
      const double t = rng.uniform(-1.0, 1.0);
      const double a = rng.uniform(-0.08, 0.08), b = rng.uniform(-0.08, 0.08);
      if (bar == 0) { p[0] = t; p[1] = a; p[2] = b; }
      else if (bar == 1) { p[0] = a; p[1] = t; p[2] = b; }
      else { p[0] = a; p[1] = b; p[2] = t; }
      break;
    }
    case 13: {  // L-shape, two unequal bars
      if (rng.uniform() < 0.6) {
        p[0] = rng.uniform(-1.0, 1.0);
        p[1] = rng.uniform(-0.12, 0.12);
      } else {
        p[0] = rng.uniform(-1.0, -0.76);
        p[1] = rng.uniform(0.0, 1.2);
      }
      p[2] = rng.uniform(-0.12, 0.12);
      break;
    }
    case 14: {  // planar spiral
      const double t = rng.uniform(0.0, 3.0 * 2.0 * M_PI);
      const double r = 0.15 + t / (6.0 * M_PI) * 0.85;
      p[0] = r * std::cos(t);
      p[1] = r * std::sin(t);
      p[2] = 0.0;
      break;
    }
    case 15:
    default: {  // asymmetric blob mixture
      static const double centers[4][3] = {{0.9, 0.0, 0.1},
                                           {-0.4, 0.55, -0.2},
                                           {0.1, -0.75, 0.35},
                                           {-0.15, 0.2, 0.8}};
      static const double sigma[4] = {0.12, 0.18, 0.10, 0.15};
      static const double cut[4] = {0.4, 0.7, 0.9, 1.0};
      const double u = rng.uniform();
      int k = 0;
      while (k < 3 && u >= cut[k]) ++k;
      for (int c = 0; c < 3; ++c) p[c] = centers[k][c] + sigma[k] * rng.normal();
      break;
    }
  }
}

Tensor sample_cloud(int prim, int points, double noise, RngState& rng) {
  Tensor cloud({static_cast<std::size_t>(points), 3});
  if (prim == 0) {
    // antipodal pairs: the centroid is exactly zero for even counts
    for (int i = 0; i + 1 < points; i += 2) {
      double d[3];
      unit_dir(rng, d);
      for (int c = 0; c < 3; ++c) {
        cloud.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = d[c];
        cloud.at(static_cast<std::size_t>(i + 1), static_cast<std::size_t>(c)) = -d[c];
      }
    }
    if (points % 2 == 1) {
      double d[3];
      unit_dir(rng, d);
      for (int c = 0; c < 3; ++c)
        cloud.at(static_cast<std::size_t>(points - 1), static_cast<std::size_t>(c)) = d[c];
    }
  } else {
    for (int i = 0; i < points; ++i)
      sample_primitive(prim, rng, cloud.data() + static_cast<std::size_t>(i) * 3);
  }
  if (noise > 0.0)
    for (std::size_t k = 0; k < cloud.numel(); ++k) cloud[k] += noise * rng.normal();

  // recenter to the centroid, scale max radius to 1
  double c[3] = {0, 0, 0};
  const std::size_t n = cloud.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) c[k] += cloud.at(i, k);
  for (double& v : c) v /= static_cast<double>(n);
  double max_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      cloud.at(i, k) -= c[k];
      sq += cloud.at(i, k) * cloud.at(i, k);
    }
    max_r = std::max(max_r, std::sqrt(sq));
  }
  if (max_r > 0.0)
    for (std::size_t k = 0; k < cloud.numel(); ++k) cloud[k] /= max_r;
  return cloud;
}



}  // namespace

StaticSet gen_synth_static(int classes, int per_class, int points, double noise, RngState& rng) {
  require(classes >= 2 && classes <= 16, ErrorKind::TooManyClasses,
          "static classes must be in [2, 16]");
  require(per_class >= 1 && points >= 1, ErrorKind::EmptyDataset,
          "per_class and points must be >= 1");
  StaticSet set;
  set.num_classes = classes;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      set.clouds.push_back(sample_cloud(c % kNumPrimitives, points, noise, rng));
      set.labels.push_back(c);
    }
  return set;
}

namespace {

enum class Motion { Translate, RotateCw, RotateCcw, Oscillate, Expand };

Tensor apply_motion(const Tensor& base, Motion motion, int t, int frames, double phase,
                    const double* dir) {
  Tensor frame = base;
  const std::size_t n = base.rows();
  const double omega = 2.0 * M_PI / static_cast<double>(frames);
  switch (motion) {
    case Motion::Translate: {
      const double step = 0.12 * static_cast<double>(t);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) frame.at(i, k) += step * dir[k];
      break;
    }
    case Motion::RotateCw:
    case Motion::RotateCcw: {
      const double sign = motion == Motion::RotateCcw ? 1.0 : -1.0;
      const double th = phase + sign * omega * static_cast<double>(t);
      const double cs = std::cos(th), sn = std::sin(th);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = base.at(i, 0), y = base.at(i, 1);
        frame.at(i, 0) = cs * x - sn * y;
        frame.at(i, 1) = sn * x + cs * y;
      }
      break;
    }
    case Motion::Oscillate: {
      const double off = 0.25 * std::sin(omega * static_cast<double>(t));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) frame.at(i, k) += off * dir[k];
      break;
    }
    case Motion::Expand: {
      const double s = 1.0 + 0.3 * std::sin(omega * static_cast<double>(t));
      for (std::size_t i = 0; i < n * 3; ++i) frame[i] *= s;
      break;
    }
  }
  return frame;
}

}  // namespace

ClipSet gen_synth_dynamic(int classes, int per_class, int frames, int points, double noise,
                          MotionSet motion_set, RngState& rng) {
  require(frames >= 2, ErrorKind::TooFewFrames, "clips need at least 2 frames");
  require(per_class >= 1 && points >= 1, ErrorKind::EmptyDataset,
          "per_class and points must be >= 1");
  if (motion_set == MotionSet::RotationDirection)
    require(classes == 2, ErrorKind::TooManyClasses, "rotdir is a two-class task");
  else
    require(classes >= 2 && classes <= 16, ErrorKind::TooManyClasses,
            "dynamic classes must be in [2, 16]");

  ClipSet set;
  set.num_classes = classes;
  for (int c = 0; c < classes; ++c) {
    Motion motion;
    int prim;
    if (motion_set == MotionSet::RotationDirection) {
      motion = c == 0 ? Motion::RotateCcw : Motion::RotateCw;
      prim = 13;  // L-shape: strongly oriented, so rotation angle is readable
    } else {
      motion = static_cast<Motion>(c % 5);
      prim = c % kNumPrimitives;
    }
    for (int i = 0; i < per_class; ++i) {
      const Tensor base = sample_cloud(prim, points, 0.0, rng);
      double phase = rng.uniform(0.0, 2.0 * M_PI);
      // rotdir clips share a fixed phase: with a full revolution the frame
      // multiset is identical across the two classes either way, and the
      // reversed order is the only remaining signal
      if (motion_set == MotionSet::RotationDirection) phase = 0.0;
      double dir[3];
      unit_dir(rng, dir);
      Tensor clip({static_cast<std::size_t>(frames), static_cast<std::size_t>(points), 3});
      for (int t = 0; t < frames; ++t) {
        Tensor frame = apply_motion(base, motion, t, frames, phase, dir);
        if (noise > 0.0)
          for (std::size_t k = 0; k < frame.numel(); ++k) frame[k] += noise * rng.normal();
        for (std::size_t pidx = 0; pidx < frame.rows(); ++pidx)
          for (std::size_t k = 0; k < 3; ++k)
            clip.at(static_cast<std::size_t>(t), pidx, k) = frame.at(pidx, k);
      }
      set.clips.push_back(std::move(clip));
      set.labels.push_back(c);
    }
  }
  return set;
}

}  // namespace ata::io

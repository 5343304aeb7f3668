#include "bgm/datasetgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "bgm/png_io.hpp"

namespace bgm {

namespace {

using Rng = std::mt19937_64;
constexpr double kPi = std::numbers::pi;

double uni(Rng& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uni_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

template <std::size_t N>
std::size_t pick(Rng& rng, const std::array<double, N>& weights) {
  return std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
}

struct Vec2 {
  double x, y;
};

struct Color {
  double r, g, b;
};

Color random_color(Rng& rng, double lo = 0.05, double hi = 0.95) {
  return {uni(rng, lo, hi), uni(rng, lo, hi), uni(rng, lo, hi)};
}

Color mix(const Color& a, const Color& b, double t) {
  return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

void put(Raster& r, int y, int x, const Color& c) {
  r.at(0, y, x) = std::clamp(c.r, 0.0, 1.0);
  r.at(1, y, x) = std::clamp(c.g, 0.0, 1.0);
  r.at(2, y, x) = std::clamp(c.b, 0.0, 1.0);
}

// Metaball body with a feathered iso-contour.
std::vector<double> blob_alpha(int h, int w, Vec2 center, double radius, Rng& rng) {
  struct Ball {
    Vec2 c;
    double r;
  };
  std::vector<Ball> balls(static_cast<std::size_t>(uni_int(rng, 3, 5)));
  for (auto& b : balls) {
    const double ang = uni(rng, 0, 2 * kPi), dist = uni(rng, 0, 0.5) * radius;
    b.c = {center.x + dist * std::cos(ang), center.y + dist * std::sin(ang)};
    b.r = uni(rng, 0.35, 0.6) * radius;
  }
  const double feather = uni(rng, 1.0, 3.0);
  const double threshold = 0.5;
  std::vector<double> a(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double f = 0, gx = 0, gy = 0;
      for (const auto& b : balls) {
        const double dx = x - b.c.x, dy = y - b.c.y;
        const double g = std::exp(-(dx * dx + dy * dy) / (2 * b.r * b.r));
        f += g;
        gx -= dx / (b.r * b.r) * g;
        gy -= dy / (b.r * b.r) * g;
      }
      const double grad = std::max(std::hypot(gx, gy), 1e-9);
      const double sd = (f - threshold) / grad;  // approx. signed distance in pixels
      a[static_cast<std::size_t>(y) * w + x] = std::clamp(0.5 + sd / feather, 0.0, 1.0);
    }
  return a;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

// Star-shaped polygon with a feathered edge.
std::vector<double> polygon_alpha(int h, int w, Vec2 center, double radius, Rng& rng) {
  const int n = uni_int(rng, 5, 9);
  std::vector<double> angles(static_cast<std::size_t>(n));
  for (auto& a : angles) a = uni(rng, 0, 2 * kPi);
  std::sort(angles.begin(), angles.end());
  std::vector<Vec2> v;
  for (double a : angles) {
    const double r = radius * uni(rng, 0.6, 1.0);
    v.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
  }
  const double feather = uni(rng, 1.0, 4.0);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec2 p{x + 0.0, y + 0.0};
      bool inside = false;
      double dmin = 1e30;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i].y > p.y) != (v[j].y > p.y) &&
            p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x) {
          inside = !inside;
        }
        dmin = std::min(dmin, segment_distance(p, v[j], v[i]));
      }
      const double sd = inside ? dmin : -dmin;
      out[static_cast<std::size_t>(y) * w + x] = std::clamp(0.5 + sd / feather, 0.0, 1.0);
    }
  return out;
}

// Anti-aliased quadratic curves growing outward from the body; union coverage.
std::vector<double> strand_alpha(int h, int w, Vec2 center, double body_radius, double reach, int count,
                                 const SynthSpec& spec, Rng& rng) {
  std::vector<double> keep(static_cast<std::size_t>(h) * w, 1.0);  // product of (1 - coverage)
  const double spread = uni(rng, 0.5, 2 * kPi);
  const double base_angle = uni(rng, 0, 2 * kPi);
  for (int s = 0; s < count; ++s) {
    const double ang = base_angle + uni(rng, -spread / 2, spread / 2);
    const double len = reach * uni(rng, 0.4, 1.0);
    const double width = uni(rng, spec.strand_width_lo, spec.strand_width_hi);
    const double opacity = uni(rng, spec.strand_opacity_lo, spec.strand_opacity_hi);
    const Vec2 dir{std::cos(ang), std::sin(ang)};
    const Vec2 p0{center.x + 0.7 * body_radius * dir.x, center.y + 0.7 * body_radius * dir.y};
    const double bend = uni(rng, -0.4, 0.4) * len;
    const Vec2 p2{p0.x + len * dir.x + bend * 0.3 * -dir.y, p0.y + len * dir.y + bend * 0.3 * dir.x};
    const Vec2 p1{(p0.x + p2.x) / 2 - bend * dir.y, (p0.y + p2.y) / 2 + bend * dir.x};
    const int segments = std::max(8, static_cast<int>(len));
    std::vector<Vec2> pts;
    for (int i = 0; i <= segments; ++i) {
      const double t = static_cast<double>(i) / segments, u = 1 - t;
      pts.push_back({u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x, u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y});
    }
    const double halo = width / 2 + 1.0;
    int x0 = w, x1 = -1, y0 = h, y1 = -1;
    for (const auto& p : pts) {
      x0 = std::min(x0, static_cast<int>(std::floor(p.x - halo)));
      x1 = std::max(x1, static_cast<int>(std::ceil(p.x + halo)));
      y0 = std::min(y0, static_cast<int>(std::floor(p.y - halo)));
      y1 = std::max(y1, static_cast<int>(std::ceil(p.y + halo)));
    }
    x0 = std::max(x0, 0), y0 = std::max(y0, 0), x1 = std::min(x1, w - 1), y1 = std::min(y1, h - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double d = 1e30;
        for (std::size_t i = 1; i < pts.size(); ++i) d = std::min(d, segment_distance({x + 0.0, y + 0.0}, pts[i - 1], pts[i]));
        const double cov = opacity * std::clamp(width / 2 + 0.5 - d, 0.0, 1.0);
        if (cov > 0) keep[static_cast<std::size_t>(y) * w + x] *= 1.0 - cov;
      }
  }
  for (double& k : keep) k = 1.0 - k;
  return keep;
}

double hash_noise(int ix, int iy, std::uint64_t salt) {
  std::uint64_t z = salt ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) * 0x9E3779B97F4A7C15ULL) ^
                    (static_cast<std::uint64_t>(static_cast<std::uint32_t>(iy)) * 0xC2B2AE3D27D4EB4FULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

// Smoothly interpolated lattice noise, summed over octaves; result in [0, 1].
double value_noise(double x, double y, double cell, int octaves, std::uint64_t salt) {
  double sum = 0, amp = 1, norm = 0;
  for (int o = 0; o < octaves; ++o) {
    const double fx = x / cell, fy = y / cell;
    const int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
    double tx = fx - ix, ty = fy - iy;
    tx = tx * tx * (3 - 2 * tx);
    ty = ty * ty * (3 - 2 * ty);
    const double a = hash_noise(ix, iy, salt + o), b = hash_noise(ix + 1, iy, salt + o);
    const double c = hash_noise(ix, iy + 1, salt + o), d = hash_noise(ix + 1, iy + 1, salt + o);
    const double top = a + tx * (b - a), bot = c + tx * (d - c);
    sum += amp * (top + ty * (bot - top));
    norm += amp;
    amp *= 0.5;
    cell /= 2;
  }
  return sum / norm;
}

Image background_of_kind(BackgroundKind kind, int h, int w, Rng& rng) {
  Raster r(3, h, w);
  const Color c1 = random_color(rng), c2 = random_color(rng);
  switch (kind) {
    case BackgroundKind::flat:
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) put(r, y, x, c1);
      break;
    case BackgroundKind::gradient: {
      const double ang = uni(rng, 0, 2 * kPi);
      const double dx = std::cos(ang), dy = std::sin(ang);
      const double extent = std::abs(dx) * (w - 1) + std::abs(dy) * (h - 1);
      const double offset = std::min(0.0, dx * (w - 1)) + std::min(0.0, dy * (h - 1));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) put(r, y, x, mix(c1, c2, extent > 0 ? (dx * x + dy * y - offset) / extent : 0.0));
      break;
    }
    case BackgroundKind::noise: {
      const double cell = uni(rng, 16, 48);
      const std::uint64_t salt = rng();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) put(r, y, x, mix(c1, c2, value_noise(x, y, cell, 3, salt)));
      break;
    }
    case BackgroundKind::checker: {
      const int cell = uni_int(rng, 8, 32);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) put(r, y, x, ((x / cell + y / cell) % 2) ? c1 : c2);
      break;
    }
  }
  return Image(std::move(r));
}

int draw_side(const SynthSpec& spec, Rng& rng) {
  const int v = uni_int(rng, spec.size_lo, spec.size_hi);
  return std::max(spec.size_multiple, (v / spec.size_multiple) * spec.size_multiple);
}

}  // namespace

void SynthSpec::validate() const {
  if (size_lo < 1 || size_lo > size_hi) throw std::invalid_argument("synth: invalid size range");
  if (size_multiple < 1) throw std::invalid_argument("synth: size_multiple must be >= 1");
  auto check = [](const auto& weights, const char* what) {
    double total = 0;
    for (double v : weights) {
      if (!(v >= 0)) throw std::invalid_argument(std::string("synth: negative ") + what + " weight");
      total += v;
    }
    if (!(total > 0)) throw std::invalid_argument(std::string("synth: all ") + what + " weights are zero");
  };
  check(subject_weights, "subject");
  check(background_weights, "background");
  if (strand_count_lo < 0 || strand_count_lo > strand_count_hi) throw std::invalid_argument("synth: strand count");
  if (!(strand_width_lo > 0 && strand_width_lo <= strand_width_hi)) throw std::invalid_argument("synth: strand width");
  if (!(strand_opacity_lo >= 0 && strand_opacity_lo <= strand_opacity_hi && strand_opacity_hi <= 1)) {
    throw std::invalid_argument("synth: strand opacity");
  }
  if (!(strands_on_body_prob >= 0 && strands_on_body_prob <= 1)) throw std::invalid_argument("synth: probability");
}

SynthSpec SynthSpec::from_keyvalues(const KeyValues& kv) {
  SynthSpec s;
  s.size_lo = static_cast<int>(kv.get_int("size_lo", s.size_lo));
  s.size_hi = static_cast<int>(kv.get_int("size_hi", s.size_hi));
  s.size_multiple = static_cast<int>(kv.get_int("size_multiple", s.size_multiple));
  const auto sw = kv.get_doubles("subject_weights", {s.subject_weights.begin(), s.subject_weights.end()});
  const auto bw = kv.get_doubles("background_weights", {s.background_weights.begin(), s.background_weights.end()});
  if (sw.size() != 3) throw ConfigError("subject_weights needs 3 values (blob, strands, polygon)");
  if (bw.size() != 4) throw ConfigError("background_weights needs 4 values (flat, gradient, noise, checker)");
  std::copy(sw.begin(), sw.end(), s.subject_weights.begin());
  std::copy(bw.begin(), bw.end(), s.background_weights.begin());
  s.strands_on_body_prob = kv.get_double("strands_on_body_prob", s.strands_on_body_prob);
  s.strand_count_lo = static_cast<int>(kv.get_int("strand_count_lo", s.strand_count_lo));
  s.strand_count_hi = static_cast<int>(kv.get_int("strand_count_hi", s.strand_count_hi));
  s.strand_width_lo = kv.get_double("strand_width_lo", s.strand_width_lo);
  s.strand_width_hi = kv.get_double("strand_width_hi", s.strand_width_hi);
  s.strand_opacity_lo = kv.get_double("strand_opacity_lo", s.strand_opacity_lo);
  s.strand_opacity_hi = kv.get_double("strand_opacity_hi", s.strand_opacity_hi);
  s.validate();
  return s;
}

KeyValues SynthSpec::to_keyvalues() const {
  KeyValues kv;
  auto join = [](const auto& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
  };
  kv.set("size_lo", std::to_string(size_lo));
  kv.set("size_hi", std::to_string(size_hi));
  kv.set("size_multiple", std::to_string(size_multiple));
  kv.set("subject_weights", join(subject_weights));
  kv.set("background_weights", join(background_weights));
  kv.set("strands_on_body_prob", join(std::array<double, 1>{strands_on_body_prob}));
  kv.set("strand_count_lo", std::to_string(strand_count_lo));
  kv.set("strand_count_hi", std::to_string(strand_count_hi));
  kv.set("strand_width_lo", join(std::array<double, 1>{strand_width_lo}));
  kv.set("strand_width_hi", join(std::array<double, 1>{strand_width_hi}));
  kv.set("strand_opacity_lo", join(std::array<double, 1>{strand_opacity_lo}));
  kv.set("strand_opacity_hi", join(std::array<double, 1>{strand_opacity_hi}));
  return kv;
}

Image generate_background(const SynthSpec& spec, int height, int width, std::uint64_t seed, BackgroundKind* kind) {
  spec.validate();
  Rng rng(seed ^ 0xB6A4C0FFEEULL);
  const auto k = static_cast<BackgroundKind>(pick(rng, spec.background_weights));
  if (kind) *kind = k;
  return background_of_kind(k, height, width, rng);
}

SynthSample generate_sample(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int h = draw_side(spec, rng), w = draw_side(spec, rng);
  const auto subject = static_cast<SubjectKind>(pick(rng, spec.subject_weights));
  const double side = std::min(h, w);
  const Vec2 center{w / 2.0 + uni(rng, -0.15, 0.15) * w, h / 2.0 + uni(rng, -0.15, 0.15) * h};
  const double radius = uni(rng, 0.2, 0.35) * side;

  std::vector<double> body;
  std::vector<double> hair(static_cast<std::size_t>(h) * w, 0.0);
  double body_radius = radius;
  switch (subject) {
    case SubjectKind::blob:
      body = blob_alpha(h, w, center, radius, rng);
      break;
    case SubjectKind::polygon:
      body = polygon_alpha(h, w, center, radius, rng);
      break;
    case SubjectKind::strands:
      body_radius = 0.5 * radius;
      body = blob_alpha(h, w, center, body_radius, rng);
      break;
  }
  const bool grow = subject == SubjectKind::strands || uni(rng, 0, 1) < spec.strands_on_body_prob;
  if (grow) {
    int count = uni_int(rng, spec.strand_count_lo, spec.strand_count_hi);
    if (subject != SubjectKind::strands) count = std::max(1, count / 2);
    hair = strand_alpha(h, w, center, body_radius, subject == SubjectKind::strands ? 1.6 * radius : 0.8 * radius, count,
                        spec, rng);
  }

  const Color body_a = random_color(rng, 0.1, 0.95), body_b = random_color(rng, 0.1, 0.95);
  const Color hair_col = random_color(rng, 0.05, 0.9);
  const double gang = uni(rng, 0, 2 * kPi);
  Raster alpha(1, h, w), fg(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double a = 1.0 - (1.0 - body[i]) * (1.0 - hair[i]);
      alpha.data[i] = a;
      const double t = 0.5 + 0.5 * ((x - center.x) * std::cos(gang) + (y - center.y) * std::sin(gang)) / side;
      const Color skin = mix(body_a, body_b, std::clamp(t, 0.0, 1.0));
      const double share = hair[i] + body[i] > 0 ? hair[i] / (hair[i] + body[i]) : 0.0;
      put(fg, y, x, mix(skin, hair_col, share));
    }

  BackgroundKind bk;
  Image bg = generate_background(spec, h, w, seed, &bk);
  return SynthSample{Image(std::move(fg)), AlphaMatte(std::move(alpha)), std::move(bg), subject, bk};
}

namespace {

std::string stem_of(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const SynthSpec& spec, std::size_t count,
                   std::uint64_t first_seed) {
  namespace fs = std::filesystem;
  for (const char* sub : {"fgr", "pha", "bgr"}) fs::create_directories(dir / sub);
  std::ostringstream manifest;
  manifest << "# index seed\n";
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = first_seed + i;
    const SynthSample s = generate_sample(spec, seed);
    const std::string name = stem_of(i) + ".png";
    write_png(dir / "fgr" / name, s.fg.raster(), 16);
    write_png(dir / "pha" / name, s.alpha.raster(), 16);
    write_png(dir / "bgr" / name, s.bg.raster(), 16);
    manifest << i << ' ' << seed << '\n';
  }
  note_file_open();
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
  out << manifest.str();
}

DatasetListing list_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  auto pngs = [&](const char* sub) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir / sub)) return out;
    for (const auto& e : fs::directory_iterator(dir / sub))
      if (e.is_regular_file() && e.path().extension() == ".png") out[e.path().stem().string()] = e.path();
    return out;
  };
  const auto fgr = pngs("fgr"), pha = pngs("pha"), bgr = pngs("bgr");
  std::set<std::string> names;
  for (const auto& [k, v] : fgr) names.insert(k);
  for (const auto& [k, v] : pha) names.insert(k);
  DatasetListing listing;
  for (const auto& n : names) {
    DatasetEntry e{n, {}, {}};
    if (auto it = fgr.find(n); it != fgr.end()) e.fgr = it->second;
    if (auto it = pha.find(n); it != pha.end()) e.pha = it->second;
    listing.samples.push_back(std::move(e));
  }
  for (const auto& [k, v] : bgr) listing.backgrounds.push_back(v);
  return listing;
}

}  // namespace bgm

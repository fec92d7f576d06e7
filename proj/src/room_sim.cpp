#include "envid/room_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "envid/error.hpp"

namespace envid::room {
namespace {

constexpr int kSincTaps = 81;
constexpr int kSincHalf = kSincTaps / 2;
constexpr double kAmplitudeFloor = 1e-4;  // relative to the direct path

bool on_decimeter_grid(double v) { return std::abs(v * 10.0 - std::round(v * 10.0)) <= 1e-8; }

double decimeters(long k) { return static_cast<double>(k) / 10.0; }

// One mirrored source coordinate along an axis.
struct AxisImage {
  double offset;  // image coordinate minus mic coordinate
  int bounces;
};

std::vector<AxisImage> axis_images(double room_len, double src, double mic, double reach) {
  std::vector<AxisImage> out;
  const long n_max = static_cast<long>(std::ceil(reach / (2.0 * room_len))) + 1;
  for (long n = -n_max; n <= n_max; ++n) {
    for (int q = 0; q <= 1; ++q) {
      const double pos = (1 - 2 * q) * src + 2.0 * static_cast<double>(n) * room_len;
      const double off = pos - mic;
      if (std::abs(off) <= reach)
        out.push_back({off, static_cast<int>(std::labs(2 * n - q))});
    }
  }
  std::sort(out.begin(), out.end(), [](const AxisImage& a, const AxisImage& b) {
    if (a.bounces != b.bounces) return a.bounces < b.bounces;
    return a.offset < b.offset;
  });
  return out;
}

// Smallest |offset| per bounce count; infinity where the axis has none.
std::vector<double> nearest_by_bounces(const std::vector<AxisImage>& images) {
  std::vector<double> out;
  for (const auto& im : images) {
    if (static_cast<std::size_t>(im.bounces) >= out.size())
      out.resize(im.bounces + 1, std::numeric_limits<double>::infinity());
    out[im.bounces] = std::min(out[im.bounces], std::abs(im.offset));
  }
  return out;
}

// First reflection order whose nearest image is below `floor_amp`; every
// image of a lower order is rendered.
int order_cutoff(const std::vector<AxisImage>& xs, const std::vector<AxisImage>& ys,
                 const std::vector<AxisImage>& zs, double beta, double floor_amp, double direct) {
  const auto nx = nearest_by_bounces(xs), ny = nearest_by_bounces(ys), nz = nearest_by_bounces(zs);
  const int top = static_cast<int>(nx.size() + ny.size() + nz.size());
  for (int b = 0; b <= top; ++b) {
    double d2 = std::numeric_limits<double>::infinity();
    for (int bx = 0; bx < static_cast<int>(nx.size()) && bx <= b; ++bx)
      for (int by = 0; by < static_cast<int>(ny.size()) && bx + by <= b; ++by) {
        const int bz = b - bx - by;
        if (bz >= static_cast<int>(nz.size())) continue;
        d2 = std::min(d2, nx[bx] * nx[bx] + ny[by] * ny[by] + nz[bz] * nz[bz]);
      }
    if (!std::isfinite(d2)) continue;
    if (std::pow(beta, b) / std::max(std::sqrt(d2), direct) < floor_amp) return b;
  }
  return top + 1;
}

bool inside(const RoomSpec& r, const Vec3& p) {
  return p.x > 0.0 && p.y > 0.0 && p.z > 0.0 && p.x < r.length && p.y < r.width &&
         p.z < r.height;
}

}  // namespace

std::string_view to_string(ShapeCategory c) {
  switch (c) {
    case ShapeCategory::kCorridor: return "corridor";
    case ShapeCategory::kRectangle: return "rectangle";
    case ShapeCategory::kSquare: return "square";
  }
  return "rectangle";
}

ShapeCategory parse_category(std::string_view name) {
  if (name == "corridor") return ShapeCategory::kCorridor;
  if (name == "rectangle") return ShapeCategory::kRectangle;
  if (name == "square") return ShapeCategory::kSquare;
  throw Error(ErrorKind::kInvalidArgument, "unknown shape category '" + std::string(name) + "'");
}

std::pair<double, double> fraction_band(ShapeCategory c) {
  switch (c) {
    case ShapeCategory::kCorridor: return {0.1, 0.3};
    case ShapeCategory::kRectangle: return {0.4, 0.7};
    case ShapeCategory::kSquare: return {0.8, 1.0};
  }
  return {0.4, 0.7};
}

void validate(const RoomSpec& room) {
  auto bad = [](const std::string& why) { return Error(ErrorKind::kInvalidArgument, why); };
  if (!(room.length >= 1.0 - 1e-9 && room.length <= 50.0 + 1e-9) || !on_decimeter_grid(room.length))
    throw bad("length must be a multiple of 0.1 in [1, 50]");
  if (!(room.height >= 2.0 - 1e-9 && room.height <= 5.0 + 1e-9) || !on_decimeter_grid(room.height))
    throw bad("height must be a multiple of 0.1 in [2, 5]");
  const auto [lo, hi] = fraction_band(room.category);
  const double f = room.width / room.length;
  if (!(f >= lo - 1e-9 && f <= hi + 1e-9))
    throw bad("width/length fraction outside the " + std::string(to_string(room.category)) +
              " band");
  if (!(room.absorption >= 0.1 - 1e-12 && room.absorption <= 0.8 + 1e-12))
    throw bad("absorption must lie in [0.1, 0.8]");
}

RoomSpec sample_room(ShapeCategory category, Rng& rng, const RoomOverrides& overrides) {
  const auto [lo, hi] = fraction_band(category);
  RoomSpec room;
  room.category = category;
  room.length = overrides.length ? *overrides.length
                                 : decimeters(10 + static_cast<long>(uniform_index(rng, 491)));
  room.height = overrides.height ? *overrides.height
                                 : decimeters(20 + static_cast<long>(uniform_index(rng, 31)));
  if (overrides.fraction) {
    if (*overrides.fraction < lo - 1e-12 || *overrides.fraction > hi + 1e-12)
      throw Error(ErrorKind::kInvalidArgument, "requested width fraction outside category band");
    room.width = *overrides.fraction * room.length;
  } else {
    // Widths on the 0.1 m grid whose fraction lies inside the band.
    const long w_lo = static_cast<long>(std::ceil(lo * room.length * 10.0 - 1e-9));
    const long w_hi = static_cast<long>(std::floor(hi * room.length * 10.0 + 1e-9));
    if (w_hi < w_lo) throw Error(ErrorKind::kInvalidArgument, "no grid width fits the band");
    room.width = decimeters(w_lo + static_cast<long>(uniform_index(
                                       rng, static_cast<std::size_t>(w_hi - w_lo + 1))));
  }
  room.absorption = overrides.absorption ? *overrides.absorption : uniform(rng, 0.1, 0.8);
  validate(room);
  return room;
}

RoomSpec sample_room_for_volume(ShapeCategory category, double target_volume, Rng& rng,
                                std::optional<double> absorption) {
  const auto [lo, hi] = fraction_band(category);
  RoomSpec best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double f = uniform(rng, lo, hi);
    const double h = decimeters(20 + static_cast<long>(uniform_index(rng, 31)));
    long lk = std::lround(std::sqrt(target_volume / (f * h)) * 10.0);
    lk = std::clamp(lk, 10L, 500L);
    const double length = decimeters(lk);
    const long w_lo = static_cast<long>(std::ceil(lo * length * 10.0 - 1e-9));
    const long w_hi = static_cast<long>(std::floor(hi * length * 10.0 + 1e-9));
    const long wk = std::clamp(std::lround(f * length * 10.0), w_lo, w_hi);
    RoomSpec room;
    room.category = category;
    room.length = length;
    room.width = decimeters(wk);
    room.height = h;
    room.absorption = absorption ? *absorption : uniform(rng, 0.1, 0.8);
    const double err = std::abs(std::log(room.volume() / target_volume));
    if (err < best_err) {
      best_err = err;
      best = room;
    }
    if (err < 0.02) break;
  }
  validate(best);
  return best;
}

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

bool fits_grid(const RoomSpec& room, const GridSpec& grid) {
  return grid.edge_margin < std::min(room.length, room.width) / 2.0 &&
         grid.mic_height > 0.0 && grid.mic_height < room.height;
}

std::vector<Placement> grid_placements(const RoomSpec& room, const GridSpec& grid) {
  if (grid.rows == 0 || grid.cols == 0)
    throw Error(ErrorKind::kInvalidArgument, "grid needs at least one row and column");
  if (!fits_grid(room, grid))
    throw Error(ErrorKind::kRoomTooSmall,
                "edge margin " + std::to_string(grid.edge_margin) + " m does not fit room " +
                    room.room_id);
  auto axis = [&](double extent, std::size_t count, std::size_t i) {
    if (count == 1) return extent / 2.0;
    const double span = extent - 2.0 * grid.edge_margin;
    return grid.edge_margin + span * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  const double cx = room.length / 2.0;
  const double cy = room.width / 2.0;
  std::vector<Placement> out;
  out.reserve(grid.rows * grid.cols);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      Placement p;
      p.grid_index = {r, c};
      p.mic = {axis(room.length, grid.cols, c), axis(room.width, grid.rows, r), grid.mic_height};
      double dx = cx - p.mic.x;
      double dy = cy - p.mic.y;
      const double norm = std::hypot(dx, dy);
      if (norm < 1e-9) {
        dx = 1.0;
        dy = 0.0;
      } else {
        dx /= norm;
        dy /= norm;
      }
      p.source = {p.mic.x + grid.source_mic_distance * dx, p.mic.y + grid.source_mic_distance * dy,
                  p.mic.z};
      out.push_back(p);
    }
  }
  return out;
}

double default_max_time(const RoomSpec& room) { return std::max(1.5 * sabine_rt60(room), 0.5); }

std::vector<double> render_image_sources(const RoomSpec& room, const Placement& placement,
                                         int sample_rate, double max_time_s) {
  if (sample_rate < 8000) throw Error(ErrorKind::kInvalidGeometry, "sample rate below 8 kHz");
  if (!inside(room, placement.mic) || !inside(room, placement.source))
    throw Error(ErrorKind::kInvalidGeometry, "source or microphone outside the room");
  const double direct = distance(placement.mic, placement.source);
  if (direct <= 0.0) throw Error(ErrorKind::kInvalidGeometry, "source and microphone coincide");
  if (!(max_time_s > direct / kSpeedOfSound))
    throw Error(ErrorKind::kInvalidGeometry, "max_time_s shorter than the direct-path delay");

  const auto n_samples = static_cast<std::size_t>(std::ceil(max_time_s * sample_rate));
  std::vector<double> air(n_samples, 0.0);
  const double fs = static_cast<double>(sample_rate);
  const double reach = max_time_s * kSpeedOfSound;
  const double reach2 = reach * reach;
  const double beta = std::sqrt(1.0 - room.absorption);
  const double floor_amp = kAmplitudeFloor / direct;

  const auto xs = axis_images(room.length, placement.source.x, placement.mic.x, reach);
  const auto ys = axis_images(room.width, placement.source.y, placement.mic.y, reach);
  const auto zs = axis_images(room.height, placement.source.z, placement.mic.z, reach);

  // Hann window over 2 * (kSincHalf + 1) so that the outermost taps are
  // non-zero.
  const double win_half = kSincHalf + 1.0;
  const double rot_c = std::cos(std::numbers::pi / win_half);
  const double rot_s = std::sin(std::numbers::pi / win_half);

  const int cutoff = order_cutoff(xs, ys, zs, beta, floor_amp, direct);

  for (const AxisImage& ix : xs) {
    if (ix.bounces >= cutoff) break;
    const double gx = std::pow(beta, ix.bounces);
    for (const AxisImage& iy : ys) {
      if (ix.bounces + iy.bounces >= cutoff) break;
      const double gxy = gx * std::pow(beta, iy.bounces);
      const double dxy2 = ix.offset * ix.offset + iy.offset * iy.offset;
      if (dxy2 > reach2) continue;
      for (const AxisImage& iz : zs) {
        if (ix.bounces + iy.bounces + iz.bounces >= cutoff) break;
        const double d2 = dxy2 + iz.offset * iz.offset;
        if (d2 > reach2) continue;
        const double d = std::sqrt(d2);
        const double gain = gxy * std::pow(beta, iz.bounces) / d;
        const double delay = d / kSpeedOfSound * fs;
        const long center = std::lround(delay);
        const long first = center - kSincHalf;
        // t_j = first + j - delay; sin(pi t_j) alternates sign with j.
        const double t0 = static_cast<double>(first) - delay;
        const double sin0 = std::sin(std::numbers::pi * t0);
        double wc = std::cos(std::numbers::pi * t0 / win_half);
        double ws = std::sin(std::numbers::pi * t0 / win_half);
        double sign = 1.0;
        for (int j = 0; j < kSincTaps; ++j, sign = -sign) {
          const long idx = first + j;
          const double t = t0 + j;
          if (idx >= 0 && idx < static_cast<long>(n_samples)) {
            const double sinc =
                std::abs(t) < 1e-12 ? 1.0 : sign * sin0 / (std::numbers::pi * t);
            air[static_cast<std::size_t>(idx)] += gain * sinc * 0.5 * (1.0 + wc);
          }
          const double nc = wc * rot_c - ws * rot_s;
          ws = ws * rot_c + wc * rot_s;
          wc = nc;
        }
      }
    }
  }
  return air;
}

Air simulate_air(const RoomSpec& room, const Placement& placement, int sample_rate,
                 std::optional<double> max_time_s) {
  Air air;
  air.sample_rate = sample_rate;
  air.samples = render_image_sources(room, placement, sample_rate,
                                     max_time_s.value_or(default_max_time(room)));
  air.room_id = room.room_id;
  air.grid_index = placement.grid_index;
  air.labels.volume = room.volume();
  air.labels.rt60_sabine = sabine_rt60(room);
  air.labels.rt60_schroeder = schroeder_rt60(air.samples, sample_rate);
  return air;
}

double sabine_rt60(const RoomSpec& room) {
  return 0.161 * room.volume() / (room.absorption * room.surface_area());
}

std::vector<double> schroeder_curve_db(std::span<const double> air) {
  std::vector<double> energy(air.size());
  double acc = 0.0;
  for (std::size_t i = air.size(); i-- > 0;) {
    acc += air[i] * air[i];
    energy[i] = acc;
  }
  std::size_t n = energy.size();
  while (n > 0 && energy[n - 1] <= 0.0) --n;
  energy.resize(n);
  if (n == 0) return energy;
  const double total = energy[0];
  for (double& e : energy) e = 10.0 * std::log10(e / total);
  return energy;
}

std::size_t direct_sound_end(std::span<const double> air) {
  if (air.empty()) return 0;
  std::size_t peak = 0;
  for (std::size_t i = 1; i < air.size(); ++i)
    if (std::abs(air[i]) > std::abs(air[peak])) peak = i;
  return std::min(air.size(), peak + kSincHalf + 1);
}

double schroeder_rt60(std::span<const double> air, int sample_rate) {
  const auto curve = schroeder_curve_db(air.subspan(direct_sound_end(air)));
  auto first_below = [&](double level) {
    for (std::size_t i = 0; i < curve.size(); ++i)
      if (curve[i] <= level) return i;
    return curve.size();
  };
  const std::size_t i5 = first_below(-5.0);
  const std::size_t i25 = first_below(-25.0);
  if (i25 >= curve.size() || i25 < i5 + 2)
    throw Error(ErrorKind::kDecayTooShort, "decay curve does not span -5 dB to -25 dB");
  // Least-squares line through (t, dB) over [i5, i25].
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(i25 - i5 + 1);
  for (std::size_t i = i5; i <= i25; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    st += t;
    sy += curve[i];
    stt += t * t;
    sty += t * curve[i];
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  if (!(slope < 0.0)) throw Error(ErrorKind::kDecayTooShort, "non-decaying energy curve");
  return -60.0 / slope;
}

}  // namespace envid::room

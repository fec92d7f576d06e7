#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "envid/rng.hpp"

namespace envid::room {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

enum class ShapeCategory { kCorridor, kRectangle, kSquare };

std::string_view to_string(ShapeCategory c);
ShapeCategory parse_category(std::string_view name);
// Allowed width/length fraction for a category.
std::pair<double, double> fraction_band(ShapeCategory c);

// Shoebox room, uniform absorption on all six surfaces.
struct RoomSpec {
  double length = 0.0;  // m, along x
  double width = 0.0;   // m, along y
  double height = 0.0;  // m, along z
  double absorption = 0.1;
  ShapeCategory category = ShapeCategory::kRectangle;
  std::string room_id;

  double volume() const { return length * width * height; }
  double surface_area() const {
    return 2.0 * (length * width + length * height + width * height);
  }
};

// Throws Error(kInvalidArgument) when an invariant is violated.
void validate(const RoomSpec& room);

struct RoomOverrides {
  std::optional<double> length;
  std::optional<double> fraction;  // width / length
  std::optional<double> height;
  std::optional<double> absorption;
};

// Dimensions on the 0.1 m grid, absorption uniform in [0.1, 0.8] unless
// overridden. A forced fraction outside the category band is rejected.
RoomSpec sample_room(ShapeCategory category, Rng& rng, const RoomOverrides& overrides = {});

// Room of the category whose volume approximates `target_volume`.
RoomSpec sample_room_for_volume(ShapeCategory category, double target_volume, Rng& rng,
                                std::optional<double> absorption = std::nullopt);

struct GridSpec {
  std::size_t rows = 5;
  std::size_t cols = 5;
  double edge_margin = 0.3;
  double mic_height = 1.7;
  double source_mic_distance = 0.1;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};
double distance(const Vec3& a, const Vec3& b);

struct GridIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridIndex&) const = default;
};

struct Placement {
  Vec3 mic;
  Vec3 source;
  GridIndex grid_index;
};

bool fits_grid(const RoomSpec& room, const GridSpec& grid);

// rows x cols equidistant microphone positions (rows along width, columns
// along length) with the outermost ones `edge_margin` from the walls. The
// source sits `source_mic_distance` from the mic toward the horizontal room
// center (+x when the mic is at the center). Throws kRoomTooSmall.
std::vector<Placement> grid_placements(const RoomSpec& room, const GridSpec& grid = {});

struct AirLabels {
  double volume = 0.0;
  double rt60_sabine = 0.0;
  double rt60_schroeder = 0.0;
};

struct Air {
  int sample_rate = 16000;
  std::vector<double> samples;
  std::string room_id;
  GridIndex grid_index;
  AirLabels labels;
};

// max(1.5 * Sabine RT60, 0.5 s).
double default_max_time(const RoomSpec& room);

// Image-source rendering; see simulate_air. Throws kInvalidGeometry.
std::vector<double> render_image_sources(const RoomSpec& room, const Placement& placement,
                                         int sample_rate, double max_time_s);

Air simulate_air(const RoomSpec& room, const Placement& placement, int sample_rate = 16000,
                 std::optional<double> max_time_s = std::nullopt);

double sabine_rt60(const RoomSpec& room);

// Backward-integrated energy decay curve in dB relative to total energy.
// Trailing samples with zero remaining energy are dropped.
std::vector<double> schroeder_curve_db(std::span<const double> air);

// First sample after the direct sound: the strongest peak plus half the
// fractional-delay kernel.
std::size_t direct_sound_end(std::span<const double> air);

// Linear fit of the decay curve of the response after the direct sound
// between -5 dB and -25 dB, extrapolated to 60 dB. Throws kDecayTooShort
// when -25 dB is never reached.
double schroeder_rt60(std::span<const double> air, int sample_rate);

}  // namespace envid::room

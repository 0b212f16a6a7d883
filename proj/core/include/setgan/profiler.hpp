#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "setgan/bundle.hpp"
#include "setgan/inference.hpp"

namespace setgan {

struct PowerSample {
  double t_seconds = 0.0;
  double watts = 0.0;
};

enum class TraceSource { kFile, kSyntheticModel, kPlatformSensor };
std::string_view to_string(TraceSource source);

// Piecewise-constant power: each sample holds until the next timestamp.
struct PowerTrace {
  std::vector<PowerSample> samples;
  TraceSource source = TraceSource::kSyntheticModel;

  void validate() const;  // strictly increasing timestamps, power >= 0
};

// CSV with header "t_seconds,power_watts".
PowerTrace parse_trace_csv(const std::string& text);
PowerTrace load_trace_csv(const std::filesystem::path& path);
std::string trace_to_csv(const PowerTrace& trace);

// Time-weighted mean power over [start, end].
double average_power(const PowerTrace& trace, double start, double end);
// P_avg * T^2 over [0, duration].
double edp(const PowerTrace& trace, double duration);
// sum(P * dt) * T over [0, duration]; equals edp() for piecewise-constant traces.
double edp_summation(const PowerTrace& trace, double duration);

// Divides by the last entry.
std::vector<double> normalize_edp(const std::vector<double>& edp_values);

struct ScaleEnergy {
  int up_to_scale = 0;
  double wall_seconds = 0.0;
  double avg_watts = 0.0;
  double edp = 0.0;
  double macs = 0.0;
};

struct EnergyReport {
  std::vector<ScaleEnergy> scales;
  std::vector<double> normalized_edp;
  bool full_scale_present = false;
  TraceSource source = TraceSource::kSyntheticModel;
  std::vector<std::string> warnings;

  std::string to_json() const;
  // Plot-ready whitespace-separated table.
  std::string to_table() const;
};

// Multiply-accumulates of one generator pass over `dims` at a scale.
double generator_macs(int scale_index, Dims dims);

// Power rises linearly with the per-pass MAC count above an idle floor.
struct SyntheticPowerModel {
  double idle_watts = 2.0;
  double dynamic_watts = 3.0;  // added at the full-scale MAC count
  double sample_interval = 0.001;

  PowerTrace trace(double duration, double macs, double full_macs) const;
};

struct ProfileOptions {
  TraceSource source = TraceSource::kSyntheticModel;
  std::filesystem::path trace_file;     // kFile: trace recorded over the whole profile
  std::filesystem::path sensor_path;    // kPlatformSensor: microwatt counter file
  SyntheticPowerModel synthetic;
  int repeats = 3;                      // wall time is the minimum over repeats
};

// Default sysfs-style sensor path, overridable with SETGAN_POWER_SENSOR.
std::filesystem::path default_sensor_path();

// Runs generate() for up_to_scale = 0..request.up_to_scale, pairs each run
// with power, and normalizes EDP by the largest run.
EnergyReport profile_generation(const TrainedBundle& bundle, const GenerationRequest& request,
                                const ProfileOptions& options);

}  // namespace setgan

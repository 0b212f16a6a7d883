#include "setgan/profiler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include "json.hpp"
#include <sstream>
#include <thread>

#include "setgan/error.hpp"
#include "setgan/gan_models.hpp"

namespace setgan {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point origin, Clock::time_point t) {
  return std::chrono::duration<double>(t - origin).count();
}

// Integral of power over [start, end] for a piecewise-constant trace.
double energy(const PowerTrace& trace, double start, double end) {
  if (trace.samples.empty()) throw Error(ErrorCode::kInvalidArgument, "empty power trace");
  if (trace.samples.front().t_seconds > start) {
    throw Error(ErrorCode::kInvalidArgument, "power trace starts after the measured interval");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const double seg_start = trace.samples[k].t_seconds;
    const double seg_end = k + 1 < trace.samples.size() ? trace.samples[k + 1].t_seconds
                                                        : std::numeric_limits<double>::infinity();
    const double lo = std::max(seg_start, start);
    const double hi = std::min(seg_end, end);
    if (hi > lo) total += trace.samples[k].watts * (hi - lo);
  }
  return total;
}

// Reads a microwatt counter (hwmon style) at ~1 kHz while `running` is set.
class SensorSampler {
 public:
  SensorSampler(std::filesystem::path path, Clock::time_point origin)
      : path_(std::move(path)), origin_(origin) {}

  void start() {
    running_ = true;
    thread_ = std::thread([this] {
      while (running_) {
        sample();
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
      sample();
    });
  }

  PowerTrace stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
    trace_.source = TraceSource::kPlatformSensor;
    return trace_;
  }

  static bool readable(const std::filesystem::path& path) {
    std::ifstream in(path);
    double value = 0.0;
    return static_cast<bool>(in >> value);
  }

 private:
  void sample() {
    std::ifstream in(path_);
    double microwatts = 0.0;
    if (!(in >> microwatts)) return;
    const double t = seconds_since(origin_, Clock::now());
    if (!trace_.samples.empty() && t <= trace_.samples.back().t_seconds) return;
    trace_.samples.push_back({t, std::max(0.0, microwatts * 1e-6)});
  }

  std::filesystem::path path_;
  Clock::time_point origin_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  PowerTrace trace_;
};

}  // namespace

std::string_view to_string(TraceSource source) {
  switch (source) {
    case TraceSource::kFile: return "file";
    case TraceSource::kSyntheticModel: return "synthetic";
    case TraceSource::kPlatformSensor: return "sensor";
  }
  return "unknown";
}

void PowerTrace::validate() const {
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (!(samples[k].watts >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "power samples must be >= 0");
    }
    if (k > 0 && !(samples[k].t_seconds > samples[k - 1].t_seconds)) {
      throw Error(ErrorCode::kInvalidArgument, "trace timestamps must be strictly increasing");
    }
  }
}

PowerTrace parse_trace_csv(const std::string& text) {
  PowerTrace trace;
  trace.source = TraceSource::kFile;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line == "t_seconds,power_watts") continue;
      throw Error(ErrorCode::kBadFormat, "trace CSV must start with 't_seconds,power_watts'");
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::kBadFormat, "bad trace row: " + line);
    try {
      trace.samples.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw Error(ErrorCode::kBadFormat, "bad trace row: " + line);
    }
  }
  trace.validate();
  return trace;
}

PowerTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open trace " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_trace_csv(buffer.str());
}

std::string trace_to_csv(const PowerTrace& trace) {
  std::ostringstream out;
  out << std::setprecision(17) << "t_seconds,power_watts\n";
  for (const PowerSample& s : trace.samples) out << s.t_seconds << ',' << s.watts << '\n';
  return out.str();
}

double average_power(const PowerTrace& trace, double start, double end) {
  if (!(end > start)) throw Error(ErrorCode::kInvalidArgument, "interval must have positive length");
  return energy(trace, start, end) / (end - start);
}

double edp(const PowerTrace& trace, double duration) {
  return average_power(trace, 0.0, duration) * duration * duration;
}

double edp_summation(const PowerTrace& trace, double duration) {
  if (trace.samples.empty()) throw Error(ErrorCode::kInvalidArgument, "empty power trace");
  if (!(duration > 0.0)) throw Error(ErrorCode::kInvalidArgument, "duration must be positive");
  double sum = 0.0;
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const double t0 = std::max(trace.samples[k].t_seconds, 0.0);
    const double t1 = k + 1 < trace.samples.size() ? std::min(trace.samples[k + 1].t_seconds, duration)
                                                    : duration;
    if (t1 > t0) sum += trace.samples[k].watts * (t1 - t0);
  }
  return sum * duration;
}

std::vector<double> normalize_edp(const std::vector<double>& edp_values) {
  if (edp_values.empty()) return {};
  const double full = edp_values.back();
  if (!(full > 0.0)) throw Error(ErrorCode::kInvalidArgument, "reference EDP must be positive");
  std::vector<double> out(edp_values.size());
  std::transform(edp_values.begin(), edp_values.end(), out.begin(),
                 [full](double v) { return v / full; });
  return out;
}

double generator_macs(int scale_index, Dims dims) {
  double per_pixel = 0.0;
  for (const BlockSpec& b : generator_spec(scale_index).blocks) {
    per_pixel += static_cast<double>(b.in_channels) * b.out_channels * kKernelSize * kKernelSize;
  }
  return per_pixel * dims.height * dims.width;
}

PowerTrace SyntheticPowerModel::trace(double duration, double macs, double full_macs) const {
  PowerTrace out;
  out.source = TraceSource::kSyntheticModel;
  const double watts = idle_watts + dynamic_watts * (full_macs > 0.0 ? macs / full_macs : 0.0);
  const double step = sample_interval > 0.0 ? sample_interval : duration;
  for (double t = 0.0; t < duration; t += step) out.samples.push_back({t, watts});
  if (out.samples.empty()) out.samples.push_back({0.0, watts});
  return out;
}

std::filesystem::path default_sensor_path() {
  if (const char* env = std::getenv("SETGAN_POWER_SENSOR")) return env;
  return "/sys/class/hwmon/hwmon0/power1_input";
}

std::string EnergyReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < scales.size(); ++i) {
    rows.push_back({{"up_to_scale", scales[i].up_to_scale},
                    {"wall_seconds", scales[i].wall_seconds},
                    {"avg_watts", scales[i].avg_watts},
                    {"edp", scales[i].edp},
                    {"macs", scales[i].macs},
                    {"normalized_edp", normalized_edp.at(i)}});
  }
  nlohmann::json j = {{"source", std::string(to_string(source))},
                      {"full_scale_present", full_scale_present},
                      {"scales", rows},
                      {"warnings", warnings}};
  return j.dump(2);
}

std::string EnergyReport::to_table() const {
  std::ostringstream out;
  out << "# scale wall_s avg_W edp_Ws2 normalized_edp\n";
  out << std::setprecision(6);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    out << scales[i].up_to_scale << ' ' << scales[i].wall_seconds << ' ' << scales[i].avg_watts << ' '
        << scales[i].edp << ' ' << normalized_edp.at(i) << '\n';
  }
  return out.str();
}

EnergyReport profile_generation(const TrainedBundle& bundle, const GenerationRequest& request,
                                const ProfileOptions& options) {
  if (request.up_to_scale < 0 || request.up_to_scale >= bundle.available_scales()) {
    throw Error(ErrorCode::kScaleUnavailable, "profile: requested scales not in bundle");
  }
  EnergyReport report;
  report.source = options.source;
  report.full_scale_present = request.up_to_scale == bundle.scale_count() - 1;

  std::optional<PowerTrace> file_trace;
  if (options.source == TraceSource::kFile) file_trace = load_trace_csv(options.trace_file);
  std::filesystem::path sensor = options.sensor_path.empty() ? default_sensor_path() : options.sensor_path;
  if (options.source == TraceSource::kPlatformSensor && !SensorSampler::readable(sensor)) {
    report.warnings.push_back("power sensor " + sensor.string() +
                              " unavailable; using the synthetic power model");
    report.source = TraceSource::kSyntheticModel;
  }

  const Dims coarsest = request.coarsest_dims.value_or(bundle.manifest.schedule.coarsest());
  std::vector<double> cumulative_macs;
  double macs = 0.0;
  for (int s = 0; s <= request.up_to_scale; ++s) {
    macs += generator_macs(s, generation_dims(coarsest, bundle.factor(), s));
    cumulative_macs.push_back(macs);
  }
  const double full_macs = cumulative_macs.back();

  const auto origin = Clock::now();
  std::vector<double> edps;
  for (int s = 0; s <= request.up_to_scale; ++s) {
    GenerationRequest run = request;
    run.up_to_scale = s;
    run.inject.reset();
    double best = std::numeric_limits<double>::infinity();
    double best_start = 0.0;
    PowerTrace measured;
    for (int r = 0; r < std::max(1, options.repeats); ++r) {
      std::optional<SensorSampler> sampler;
      const auto t0 = Clock::now();
      if (report.source == TraceSource::kPlatformSensor) {
        sampler.emplace(sensor, t0);
        sampler->start();
      }
      (void)generate(bundle, run);
      const auto t1 = Clock::now();
      const double wall = seconds_since(t0, t1);
      PowerTrace trace;
      if (sampler) trace = sampler->stop();
      if (wall < best) {
        best = wall;
        best_start = seconds_since(origin, t0);
        measured = std::move(trace);
      }
    }

    ScaleEnergy row;
    row.up_to_scale = s;
    row.wall_seconds = best;
    row.macs = cumulative_macs[s];
    switch (report.source) {
      case TraceSource::kSyntheticModel: {
        const PowerTrace trace = options.synthetic.trace(best, cumulative_macs[s], full_macs);
        row.avg_watts = average_power(trace, 0.0, best);
        row.edp = edp(trace, best);
        break;
      }
      case TraceSource::kFile:
        row.avg_watts = average_power(*file_trace, best_start, best_start + best);
        row.edp = row.avg_watts * best * best;
        break;
      case TraceSource::kPlatformSensor:
        if (measured.samples.empty()) {
          throw Error(ErrorCode::kSensorUnavailable, "power sensor produced no samples");
        }
        // The first sample lands a little after t0; hold it back to zero.
        measured.samples.front().t_seconds = 0.0;
        row.avg_watts = average_power(measured, 0.0, best);
        row.edp = row.avg_watts * best * best;
        break;
    }
    edps.push_back(row.edp);
    report.scales.push_back(row);
  }
  report.normalized_edp = normalize_edp(edps);
  return report;
}

}  // namespace setgan

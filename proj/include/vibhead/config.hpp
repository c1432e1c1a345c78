#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vibhead/auth.hpp"
#include "vibhead/error.hpp"
#include "vibhead/eval.hpp"
#include "vibhead/features.hpp"
#include "vibhead/synth.hpp"
#include "vibhead/training.hpp"

namespace vibhead {

/// Every tunable of a run. Text form is `key = value` lines with `#` comments.
struct RunConfig {
  TrainConfig train;
  FeatureConfig features;
  Thresholds thresholds;
  synth::SynthConfig synth;
  synth::CorpusSpec corpus;
  double train_fraction = 0.6;
  std::uint64_t split_seed = 7;
  std::size_t registered_users = 0;  // 0 = every user in the corpus

  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.train = train;
    e.thresholds = thresholds;
    e.train_fraction = train_fraction;
    e.split_seed = split_seed;
    return e;
  }

  void validate() const {
    train.validate();
    thresholds.validate();
    features.mfcc.validate(synth.sample_rate_hz);
    if (!(features.clip_ms > 0.0)) fail(ErrorCode::InvalidArgument, "T_ms must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      fail(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
    if (synth.sample_rate_hz <= 0) fail(ErrorCode::InvalidArgument, "sample_rate_hz must be positive");
  }
};

namespace detail {

template <typename T>
T parse_config_value(std::string_view key, std::string_view text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    fail(ErrorCode::ParseError, std::string(key) + ": expected a boolean, got '" + std::string(text) + "'");
  } else if constexpr (std::is_floating_point_v<T>) {
    return parse_number(text, std::string(key));
  } else {
    T v{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size())
      fail(ErrorCode::ParseError, std::string(key) + ": expected an integer, got '" + std::string(text) + "'");
    return v;
  }
}

template <typename T>
std::string config_value_text(const T& v) {
  if constexpr (std::is_same_v<T, bool>)
    return v ? "true" : "false";
  else if constexpr (std::is_floating_point_v<T>)
    return format_number(v);
  else
    return std::to_string(v);
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
ConfigKey make_config_key(std::string name, std::string help, T& (*access)(RunConfig&)) {
  ConfigKey k{name, std::move(help), {}, {}};
  k.set = [name, access](RunConfig& c, std::string_view v) { access(c) = detail::parse_config_value<T>(name, v); };
  k.get = [access](const RunConfig& c) { return detail::config_value_text(access(const_cast<RunConfig&>(c))); };
  return k;
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
#define VIBHEAD_KEY(name, help, type, expr) \
  k.push_back(make_config_key<type>(name, help, [](RunConfig& c) -> type& { return expr; }))
    VIBHEAD_KEY("batch_size", "mini-batch size", std::size_t, c.train.batch_size);
    VIBHEAD_KEY("epochs", "training epochs", std::size_t, c.train.epochs);
    VIBHEAD_KEY("learning_rate", "Adam step size", double, c.train.learning_rate);
    VIBHEAD_KEY("adam_beta1", "Adam first-moment decay", double, c.train.adam_beta1);
    VIBHEAD_KEY("adam_beta2", "Adam second-moment decay", double, c.train.adam_beta2);
    VIBHEAD_KEY("adam_eps", "Adam epsilon", double, c.train.adam_eps);
    VIBHEAD_KEY("train_seed", "initialization and shuffle seed", std::uint64_t, c.train.seed);
    VIBHEAD_KEY("shuffle", "shuffle every epoch", bool, c.train.shuffle);
    VIBHEAD_KEY("T_ms", "clip length in ms", double, c.features.clip_ms);
    VIBHEAD_KEY("frame_ms", "MFCC frame length", double, c.features.mfcc.frame_ms);
    VIBHEAD_KEY("hop_ms", "MFCC hop", double, c.features.mfcc.hop_ms);
    VIBHEAD_KEY("n_filterbanks", "mel filters", std::size_t, c.features.mfcc.n_filterbanks);
    VIBHEAD_KEY("n_cepstra", "cepstral coefficients kept", std::size_t, c.features.mfcc.n_cepstra);
    VIBHEAD_KEY("include_energy", "append log frame energy", bool, c.features.mfcc.include_energy);
    VIBHEAD_KEY("delta_window", "delta regression half-width", std::size_t, c.features.mfcc.delta_window);
    VIBHEAD_KEY("fmin_hz", "lowest filterbank edge", double, c.features.mfcc.fmin_hz);
    VIBHEAD_KEY("fmax_hz", "highest filterbank edge, 0 = Nyquist", double, c.features.mfcc.fmax_hz);
    VIBHEAD_KEY("log_floor", "floor before the log", double, c.features.mfcc.log_floor);
    VIBHEAD_KEY("burst_window_ms", "variance window", double, c.features.burst.window_ms);
    VIBHEAD_KEY("burst_step_ms", "variance step", double, c.features.burst.step_ms);
    VIBHEAD_KEY("burst_ratio", "variance ratio over baseline", double, c.features.burst.ratio_threshold);
    VIBHEAD_KEY("burst_baseline_windows", "windows in the baseline median", std::size_t,
                c.features.burst.baseline_windows);
    VIBHEAD_KEY("alpha", "global classifier threshold", double, c.thresholds.alpha);
    VIBHEAD_KEY("beta", "leave-one-out threshold", double, c.thresholds.beta);
    VIBHEAD_KEY("sample_rate_hz", "accelerometer rate", int, c.synth.sample_rate_hz);
    VIBHEAD_KEY("drive_hz", "motor drive frequency", double, c.synth.drive_hz);
    VIBHEAD_KEY("drive_amplitude", "motor drive amplitude", double, c.synth.drive_amplitude);
    VIBHEAD_KEY("ramp_ms", "drive on/off ramp", double, c.synth.ramp_ms);
    VIBHEAD_KEY("pad_ms", "silence before and after the burst", double, c.synth.pad_ms);
    VIBHEAD_KEY("noise_scale", "multiplier on every noise source", double, c.synth.noise_scale);
    VIBHEAD_KEY("users", "synthetic registered users", std::size_t, c.corpus.users);
    VIBHEAD_KEY("impostors", "synthetic impostors", std::size_t, c.corpus.impostors);
    VIBHEAD_KEY("samples_per_gesture", "recordings per person and gesture", std::size_t,
                c.corpus.samples_per_gesture);
    VIBHEAD_KEY("burst_ms", "synthetic burst length", double, c.corpus.duration_ms);
    VIBHEAD_KEY("synth_seed", "corpus master seed", std::uint64_t, c.corpus.master_seed);
    VIBHEAD_KEY("train_fraction", "training share of each stratum", double, c.train_fraction);
    VIBHEAD_KEY("split_seed", "stratified split seed", std::uint64_t, c.split_seed);
    VIBHEAD_KEY("registered_users", "users enrolled by train, 0 = all", std::size_t, c.registered_users);
#undef VIBHEAD_KEY
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto* k = find_config_key(key);
  if (!k) fail(ErrorCode::ParseError, "unknown config key '" + std::string(key) + "'");
  k->set(cfg, value);
}

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

/// Applies `key = value` lines from `is` on top of `cfg`.
inline void apply_config_text(RunConfig& cfg, std::istream& is, const std::string& source = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.code(), source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
  apply_config_text(base, is, path.string());
  return base;
}

inline void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << '\n';
}

inline std::string config_text(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

/// FNV-1a of the canonical text form.
inline std::uint64_t config_fingerprint(const RunConfig& cfg) {
  const auto text = config_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vibhead

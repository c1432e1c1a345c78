#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vibhead/archive.hpp"
#include "vibhead/auth.hpp"
#include "vibhead/config.hpp"
#include "vibhead/error.hpp"
#include "vibhead/features.hpp"
#include "vibhead/synth.hpp"

namespace vibhead {

namespace fs = std::filesystem;

inline constexpr const char* kCorpusManifest = "manifest.csv";
inline constexpr const char* kEnsembleManifest = "ensemble.manifest";
inline constexpr const char* kRunConfigFile = "run.cfg";

// ---------------------------------------------------------------------------
// Corpus directories: one recording CSV per sample plus manifest.csv with
// `path,user,gesture,seed` rows.

struct ManifestEntry {
  std::string path;
  UserId user = kImpostor;
  Gesture gesture = Gesture::Standing;
  std::uint64_t seed = 0;
};

inline std::string user_text(UserId u) { return u == kImpostor ? "impostor" : std::to_string(u); }

inline void write_corpus_manifest(std::ostream& os, const std::vector<ManifestEntry>& entries) {
  os << "path,user,gesture,seed\n";
  for (const auto& e : entries) os << e.path << ',' << user_text(e.user) << ',' << to_string(e.gesture) << ',' << e.seed << '\n';
}

inline std::vector<ManifestEntry> read_corpus_manifest(const fs::path& file) {
  std::ifstream is(file);
  if (!is) fail(ErrorCode::IoError, "cannot open " + file.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    const auto where = file.string() + ":" + std::to_string(lineno);
    if (f.size() != 4) fail(ErrorCode::ParseError, where + ": expected path,user,gesture,seed");
    ManifestEntry e;
    e.path = f[0];
    e.user = f[1] == "impostor" ? kImpostor : detail::parse_config_value<int>(where, f[1]);
    const auto g = parse_gesture(f[2]);
    if (!g) fail(ErrorCode::ParseError, where + ": unknown gesture '" + f[2] + "'");
    e.gesture = *g;
    e.seed = detail::parse_config_value<std::uint64_t>(where, f[3]);
    out.push_back(std::move(e));
  }
  return out;
}

/// Writes every recording of the corpus into `dir` and returns the manifest.
inline std::vector<ManifestEntry> write_corpus(const fs::path& dir, const synth::CorpusSpec& spec,
                                               const synth::SynthConfig& cfg = {}) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  synth::generate_corpus(
      spec,
      [&](synth::CorpusEntry e) {
        std::ostringstream os;
        write_recording_csv(os, e.recording);
        write_text_atomic(dir / e.name, os.str());
        entries.push_back({e.name, *e.recording.user, *e.recording.gesture, e.seed});
      },
      cfg);
  std::ostringstream os;
  write_corpus_manifest(os, entries);
  write_text_atomic(dir / kCorpusManifest, os.str());
  return entries;
}

struct CorpusFile {
  fs::path path;
  VibrationRecording recording;
};

/// Recordings listed in the manifest, or every *.csv in name order when the
/// directory has no manifest.
inline std::vector<CorpusFile> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  if (fs::exists(dir / kCorpusManifest)) {
    for (const auto& e : read_corpus_manifest(dir / kCorpusManifest)) files.push_back(dir / e.path);
  } else {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  }
  std::vector<CorpusFile> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back({f, load_recording(f.string())});
  return out;
}

inline FeaturePair features_from_file(const CorpusFile& f, const FeatureConfig& cfg) {
  try {
    return features_from_recording(f.recording, cfg);
  } catch (const Error& e) {
    fail(e.code(), f.path.string() + ": " + e.what());
  }
}

inline std::vector<FeaturePair> corpus_features(const std::vector<CorpusFile>& corpus, const FeatureConfig& cfg) {
  std::vector<FeaturePair> out;
  out.reserve(corpus.size());
  for (const auto& f : corpus) {
    out.push_back(features_from_file(f, cfg));
    if (!out.back().user) fail(ErrorCode::ParseError, f.path.string() + ": recording has no user label");
  }
  return out;
}

/// Registered ids present in `samples`, truncated to the smallest `wanted`
/// when `wanted` is nonzero.
inline std::vector<UserId> corpus_users(std::span<const FeaturePair> samples, std::size_t wanted) {
  std::vector<UserId> ids;
  for (const auto& s : samples)
    if (s.user && *s.user != kImpostor) ids.push_back(*s.user);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 3) fail(ErrorCode::TooFewUsers, "corpus has " + std::to_string(ids.size()) + " registered users, need 3");
  if (wanted == 0) return ids;
  return registered_users(samples, wanted);
}

// ---------------------------------------------------------------------------
// Ensemble directories: one archive per classifier, run.cfg with the full
// configuration and ensemble.manifest tying them together.

struct EnsembleManifest {
  double clip_ms = 1000.0;
  double alpha = 0.9, beta = 0.8;
  std::vector<UserId> users;
  std::string global_archive;
  std::map<UserId, std::string> member_archives;
  std::uint64_t global_seed = 0;
  std::map<UserId, std::uint64_t> member_seeds;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.6;
};

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline void write_ensemble_manifest(std::ostream& os, const EnsembleManifest& m) {
  os << "T_ms = " << format_number(m.clip_ms) << '\n';
  os << "alpha = " << format_number(m.alpha) << '\n';
  os << "beta = " << format_number(m.beta) << '\n';
  os << "users =";
  for (UserId u : m.users) os << ' ' << u;
  os << '\n';
  os << "config_fingerprint = " << hex64(m.config_fingerprint) << '\n';
  os << "split_seed = " << m.split_seed << '\n';
  os << "train_fraction = " << format_number(m.train_fraction) << '\n';
  os << "global = " << m.global_archive << '\n';
  os << "global_seed = " << m.global_seed << '\n';
  for (const auto& [u, path] : m.member_archives) os << "member." << u << " = " << path << '\n';
  for (const auto& [u, seed] : m.member_seeds) os << "member_seed." << u << " = " << seed << '\n';
}

inline EnsembleManifest read_ensemble_manifest(const fs::path& file) {
  std::ifstream is(file);
  if (!is) fail(ErrorCode::IoError, "cannot open " + file.string());
  EnsembleManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto where = file.string() + ":" + std::to_string(lineno);
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, where + ": expected key = value");
    const std::string key(detail::trim(s.substr(0, eq)));
    const std::string value(detail::trim(s.substr(eq + 1)));
    auto user_suffix = [&](std::string_view prefix) { return detail::parse_config_value<int>(where, key.substr(prefix.size())); };
    if (key == "T_ms") {
      m.clip_ms = parse_number(value, where);
    } else if (key == "alpha") {
      m.alpha = parse_number(value, where);
    } else if (key == "beta") {
      m.beta = parse_number(value, where);
    } else if (key == "users") {
      std::istringstream us(value);
      for (std::string tok; us >> tok;) m.users.push_back(detail::parse_config_value<int>(where, tok));
    } else if (key == "config_fingerprint") {
      m.config_fingerprint = std::stoull(value, nullptr, 16);
    } else if (key == "split_seed") {
      m.split_seed = detail::parse_config_value<std::uint64_t>(where, value);
    } else if (key == "train_fraction") {
      m.train_fraction = parse_number(value, where);
    } else if (key == "global") {
      m.global_archive = value;
    } else if (key == "global_seed") {
      m.global_seed = detail::parse_config_value<std::uint64_t>(where, value);
    } else if (key.starts_with("member_seed.")) {
      m.member_seeds[user_suffix("member_seed.")] = detail::parse_config_value<std::uint64_t>(where, value);
    } else if (key.starts_with("member.")) {
      m.member_archives[user_suffix("member.")] = value;
    } else {
      fail(ErrorCode::ParseError, where + ": unknown manifest key '" + key + "'");
    }
  }
  return m;
}

/// Writes the N+1 archives, run.cfg and the manifest. Member k (in id order)
/// was trained with seed train_seed + k, the global model with train_seed.
inline EnsembleManifest save_ensemble(const fs::path& dir, const AuthenticationEnsemble<ClassifierModel>& ens,
                                      const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  EnsembleManifest m;
  m.clip_ms = ens.global().input().clip_ms;
  m.alpha = ens.thresholds().alpha;
  m.beta = ens.thresholds().beta;
  m.users = ens.users();
  m.config_fingerprint = config_fingerprint(cfg);
  m.split_seed = cfg.split_seed;
  m.train_fraction = cfg.train_fraction;
  m.global_archive = "global.vhm";
  m.global_seed = cfg.train.seed;
  save_model(dir / m.global_archive, ens.global());
  std::uint64_t k = 1;
  for (const auto& [u, model] : ens.members()) {
    m.member_archives[u] = "leave_out_" + std::to_string(u) + ".vhm";
    m.member_seeds[u] = cfg.train.seed + k++;
    save_model(dir / m.member_archives[u], model);
  }
  write_text_atomic(dir / kRunConfigFile, config_text(cfg));
  std::ostringstream os;
  write_ensemble_manifest(os, m);
  write_text_atomic(dir / kEnsembleManifest, os.str());
  return m;
}

struct LoadedEnsemble {
  RunConfig config;
  EnsembleManifest manifest;
  AuthenticationEnsemble<ClassifierModel> ensemble;
};

inline LoadedEnsemble load_ensemble(const fs::path& dir) {
  LoadedEnsemble out;
  out.manifest = read_ensemble_manifest(dir / kEnsembleManifest);
  out.config = load_config(dir / kRunConfigFile);
  if (config_fingerprint(out.config) != out.manifest.config_fingerprint)
    fail(ErrorCode::ChecksumMismatch, (dir / kRunConfigFile).string() + " does not match the ensemble manifest fingerprint");
  if (out.manifest.global_archive.empty()) fail(ErrorCode::ParseError, "ensemble manifest names no global archive");
  ClassifierModel global = load_model(dir / out.manifest.global_archive);
  std::map<UserId, ClassifierModel> members;
  for (const auto& [u, path] : out.manifest.member_archives) members.emplace(u, load_model(dir / path));
  out.ensemble = AuthenticationEnsemble<ClassifierModel>(std::move(global), std::move(members),
                                                         {out.manifest.alpha, out.manifest.beta});
  if (out.ensemble.users() != out.manifest.users)
    fail(ErrorCode::ParseError, "ensemble manifest users differ from the archived labels");
  return out;
}

}  // namespace vibhead

// Command-line front-end over the ranking pipeline library. Subcommands map
// one-to-one onto pipeline stages (dist, fuse-meta, rerank, track-avg, eval)
// plus dataset utilities (synth, validate), numeric self-checks (loss-check,
// fuse-demo) and the composed `pipeline` runner.
//
// Exit codes: 0 success, 1 missing input / IO failure, 2 validation or
// contract failure.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "reid/dataset.hpp"
#include "reid/distance.hpp"
#include "reid/error.hpp"
#include "reid/eval.hpp"
#include "reid/fusion.hpp"
#include "reid/io.hpp"
#include "reid/losses.hpp"
#include "reid/manifest.hpp"
#include "reid/parallel.hpp"
#include "reid/rerank.hpp"
#include "reid/rng.hpp"
#include "reid/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// small parsing / filesystem helpers

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    reid::fail(reid::errc::config_invalid, what + ": not a number: '" + text + "'");
  }
  return value;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    reid::fail(reid::errc::config_invalid, what + ": not a nonnegative integer: '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  reid::fail(reid::errc::config_invalid, what + ": expected true or false, got '" + text + "'");
  return false;  // unreachable
}

// key=value split for --gamma family=0.3 and --meta color=8
std::pair<std::string, std::string> split_assignment(const std::string& text,
                                                     const std::string& what) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    reid::fail(reid::errc::config_invalid, what + ": expected name=value, got '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

void require_fresh(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    reid::fail(reid::errc::config_invalid,
               "output exists: " + path.string() + " (use --force to overwrite)");
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    reid::fail(reid::errc::io_failure, "cannot create directory " + dir.string());
  }
}

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    reid::fail(reid::errc::missing_file, "cannot open " + path.string());
  }
  std::uint64_t hash = 1469598103934665603ULL;
  char buffer[65536];
  while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 1099511628211ULL;
    }
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

void apply_workers(int workers) {
  if (workers > 0) reid::set_max_workers(workers);
}

// ---------------------------------------------------------------------------
// dataset plumbing shared by the stage commands

reid::Matrix rows_subset(const reid::Matrix& m, const std::vector<std::size_t>& indices) {
  reid::Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(m.data() + indices[i] * m.cols(), m.cols(), out.data() + i * m.cols());
  }
  return out;
}

// Rows reordered to the joint index convention: queries first, gallery after.
struct SplitViews {
  reid::Matrix query;
  reid::Matrix gallery;
  reid::Matrix joint;
};

SplitViews split_views(const reid::Matrix& values, const reid::ItemManifest& manifest) {
  if (values.rows() != manifest.size()) {
    reid::fail(reid::errc::shape_mismatch,
               "matrix has " + std::to_string(values.rows()) + " rows for " +
                   std::to_string(manifest.size()) + " manifest items");
  }
  const std::vector<std::size_t> q = manifest.indices_of(reid::Split::query);
  const std::vector<std::size_t> g = manifest.indices_of(reid::Split::gallery);
  if (q.empty() || g.empty()) {
    reid::fail(reid::errc::config_invalid, "dataset needs both query and gallery items");
  }
  std::vector<std::size_t> joint = q;
  joint.insert(joint.end(), g.begin(), g.end());
  return {rows_subset(values, q), rows_subset(values, g), rows_subset(values, joint)};
}

struct DistancePair {
  reid::Matrix qg;     // |Q| x |G|
  reid::Matrix joint;  // square over queries-then-gallery
};

DistancePair compute_distances(const reid::Matrix& embeddings,
                               const reid::ItemManifest& manifest) {
  const SplitViews views = split_views(embeddings, manifest);
  return {reid::pairwise_euclidean(views.query, views.gallery),
          reid::pairwise_euclidean(views.joint, views.joint)};
}

reid::FusionWeights gamma_defaults(const reid::MetadataFeatureSet& metadata) {
  reid::FusionWeights weights;
  for (const auto& [family, values] : metadata.families) weights.gamma[family] = 0.0;
  return weights;
}

void set_gamma(reid::FusionWeights& weights, const std::string& family, double value) {
  const auto it = weights.gamma.find(family);
  if (it == weights.gamma.end()) {
    reid::fail(reid::errc::config_invalid,
               "unknown metadata family '" + family + "' in gamma assignment");
  }
  it->second = value;
}

void apply_gamma_flags(reid::FusionWeights& weights, const std::vector<std::string>& raw) {
  for (const std::string& item : raw) {
    const auto [family, value] = split_assignment(item, "--gamma");
    set_gamma(weights, family, parse_double(value, "--gamma " + family));
  }
}

void warn_if_negative(const reid::Matrix& m, const std::string& label) {
  double lowest = 0.0;
  for (double v : m.values()) lowest = std::min(lowest, v);
  if (lowest < 0.0) {
    std::cerr << "warning: " << label << " contains negative distances (min " << lowest
              << "); re-ranking assumes nonnegative dissimilarity\n";
  }
}

void print_report_footer(const reid::EvalReport& report) {
  std::cout << std::fixed << std::setprecision(6) << "probes=" << report.probes.size()
            << " skipped=" << report.skipped.size() << " mAP=" << report.mean_ap
            << " rank1=" << report.rank1 << " rank5=" << report.rank5
            << " rank10=" << report.rank10 << "\n";
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
}

void write_reports(const reid::EvalReport& report, const fs::path& out_dir) {
  {
    std::ofstream out(out_dir / "report.txt");
    if (!out) reid::fail(reid::errc::io_failure, "cannot write report.txt");
    reid::write_report_text(report, out);
  }
  {
    std::ofstream out(out_dir / "report.json");
    if (!out) reid::fail(reid::errc::io_failure, "cannot write report.json");
    reid::write_report_json(report, out);
  }
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  reid::SynthConfig config;
  std::vector<std::string> meta;
  bool force = false;
};

void run_synth(const SynthArgs& args) {
  reid::SynthConfig config = args.config;
  if (!args.meta.empty()) {
    config.meta_dims.clear();
    for (const std::string& item : args.meta) {
      const auto [family, dim] = split_assignment(item, "--meta");
      config.meta_dims[family] = parse_size(dim, "--meta " + family);
    }
  }
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "manifest.csv", args.force);
  const reid::Dataset dataset = reid::generate(config);
  reid::save_dataset_dir(dataset, out_dir);
  std::cout << "wrote " << dataset.manifest.size() << " items ("
            << dataset.manifest.count_of(reid::Split::query) << " query, "
            << dataset.manifest.count_of(reid::Split::gallery) << " gallery), dim "
            << dataset.embeddings.cols() << ", " << dataset.metadata.families.size()
            << " metadata families to " << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// validate

const char* violation_name(reid::ViolationKind kind) {
  switch (kind) {
    case reid::ViolationKind::count_mismatch: return "count_mismatch";
    case reid::ViolationKind::non_finite_value: return "non_finite_value";
    case reid::ViolationKind::track_camera_mismatch: return "track_camera_mismatch";
    case reid::ViolationKind::track_identity_mismatch: return "track_identity_mismatch";
  }
  return "unknown";
}

struct ValidateArgs {
  std::string data;
};

int run_validate(const ValidateArgs& args) {
  const reid::Dataset dataset = reid::load_dataset_dir(args.data);
  const reid::ValidationReport report =
      reid::validate_dataset(dataset.manifest, dataset.embeddings, &dataset.metadata);
  if (report.ok()) {
    std::cout << "dataset valid: " << dataset.manifest.size() << " items, "
              << dataset.metadata.families.size() << " metadata families\n";
    return 0;
  }
  for (const reid::Violation& v : report.violations) {
    std::cout << violation_name(v.kind) << ": " << v.message << "\n";
  }
  std::cerr << "dataset invalid: " << report.violations.size() << " violation(s)\n";
  return 2;
}

// ---------------------------------------------------------------------------
// dist

struct DistArgs {
  std::string data;
  std::string out;
  std::vector<std::string> embeddings;  // optional replacement matrices to average
  int workers = 0;
  bool force = false;
};

void run_dist(const DistArgs& args) {
  apply_workers(args.workers);
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "dist_qg.reid", args.force);
  require_fresh(out_dir / "dist_joint.reid", args.force);

  const reid::Dataset dataset = reid::load_dataset_dir(args.data);
  std::vector<reid::Matrix> sources;
  if (args.embeddings.empty()) {
    sources.push_back(dataset.embeddings);
  } else {
    for (const std::string& path : args.embeddings) sources.push_back(reid::load_matrix(path));
  }

  std::vector<reid::Matrix> qg_parts;
  std::vector<reid::Matrix> joint_parts;
  for (const reid::Matrix& emb : sources) {
    DistancePair pair = compute_distances(emb, dataset.manifest);
    qg_parts.push_back(std::move(pair.qg));
    joint_parts.push_back(std::move(pair.joint));
  }
  const reid::Matrix qg = reid::average_matrices(qg_parts);
  const reid::Matrix joint = reid::average_matrices(joint_parts);

  ensure_directory(out_dir);
  reid::save_matrix(qg, out_dir / "dist_qg.reid");
  reid::save_matrix(joint, out_dir / "dist_joint.reid");
  std::cout << "wrote dist_qg.reid (" << qg.rows() << "x" << qg.cols()
            << ") and dist_joint.reid (" << joint.rows() << "x" << joint.cols() << ") from "
            << sources.size() << " embedding matrix(es)\n";
}

// ---------------------------------------------------------------------------
// fuse-meta

struct FuseMetaArgs {
  std::string data;
  std::string base;
  std::string joint;
  std::string out;
  std::vector<std::string> gamma;
  int workers = 0;
  bool force = false;
};

void run_fuse_meta(const FuseMetaArgs& args) {
  apply_workers(args.workers);
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "fused_qg.reid", args.force);
  require_fresh(out_dir / "fused_joint.reid", args.force);

  const reid::Dataset dataset = reid::load_dataset_dir(args.data);
  const reid::Matrix base = reid::load_matrix(args.base);
  const reid::Matrix joint = reid::load_matrix(args.joint);

  reid::FusionWeights weights = gamma_defaults(dataset.metadata);
  apply_gamma_flags(weights, args.gamma);

  std::map<std::string, reid::Matrix> meta_qg;
  std::map<std::string, reid::Matrix> meta_joint;
  for (const auto& [family, values] : dataset.metadata.families) {
    DistancePair pair = compute_distances(values, dataset.manifest);
    meta_qg.emplace(family, std::move(pair.qg));
    meta_joint.emplace(family, std::move(pair.joint));
  }

  const reid::Matrix fused_qg = reid::fuse_metadata(base, meta_qg, weights);
  const reid::Matrix fused_joint = reid::fuse_metadata(joint, meta_joint, weights);
  warn_if_negative(fused_qg, "fused_qg");
  warn_if_negative(fused_joint, "fused_joint");

  ensure_directory(out_dir);
  reid::save_matrix(fused_qg, out_dir / "fused_qg.reid");
  reid::save_matrix(fused_joint, out_dir / "fused_joint.reid");
  std::cout << "wrote fused_qg.reid and fused_joint.reid (" << meta_qg.size()
            << " metadata families)\n";
}

// ---------------------------------------------------------------------------
// rerank

struct RerankArgs {
  std::string base;
  std::string joint;
  std::string out;
  reid::RerankParams params;
  int workers = 0;
  bool force = false;
};

void run_rerank(const RerankArgs& args) {
  apply_workers(args.workers);
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "rerank_qg.reid", args.force);

  const reid::Matrix base = reid::load_matrix(args.base);
  const reid::Matrix joint = reid::load_matrix(args.joint);
  const reid::Matrix out = reid::rerank(base, joint, args.params);

  ensure_directory(out_dir);
  reid::save_matrix(out, out_dir / "rerank_qg.reid");
  std::cout << "wrote rerank_qg.reid (k1=" << args.params.k1 << " k2=" << args.params.k2
            << " lambda=" << args.params.lambda << ")\n";
}

// ---------------------------------------------------------------------------
// track-avg

struct TrackAvgArgs {
  std::string base;
  std::string data;
  std::string out;
  int workers = 0;
  bool force = false;
};

void run_track_avg(const TrackAvgArgs& args) {
  apply_workers(args.workers);
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "trackavg_qg.reid", args.force);

  const reid::Matrix base = reid::load_matrix(args.base);
  const reid::ItemManifest manifest = reid::load_manifest(fs::path(args.data) / "manifest.csv");
  const reid::Matrix out = reid::track_average(base, manifest);

  ensure_directory(out_dir);
  reid::save_matrix(out, out_dir / "trackavg_qg.reid");
  std::cout << "wrote trackavg_qg.reid\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string base;
  std::string data;
  std::string out;
  std::size_t top_n = 0;  // 0 = unset
  bool top_n_given = false;
  bool cross_camera = false;
  bool cross_camera_given = false;
  bool aicity = false;
  bool force = false;
};

reid::EvalOptions eval_options(const EvalArgs& args) {
  reid::EvalOptions options;
  if (args.aicity) {
    options.top_n = 100;
    options.cross_camera = true;
  }
  if (args.top_n_given) options.top_n = args.top_n;
  if (args.cross_camera_given) options.cross_camera = args.cross_camera;
  return options;
}

void run_eval(const EvalArgs& args) {
  const fs::path out_dir(args.out);
  require_fresh(out_dir / "report.txt", args.force);
  require_fresh(out_dir / "report.json", args.force);

  const reid::Matrix base = reid::load_matrix(args.base);
  const reid::ItemManifest manifest = reid::load_manifest(fs::path(args.data) / "manifest.csv");
  const reid::EvalReport report = reid::evaluate(base, manifest, eval_options(args));

  ensure_directory(out_dir);
  write_reports(report, out_dir);
  print_report_footer(report);
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineArgs {
  std::string data;
  std::string out;
  std::string config_path;

  bool fuse_meta = false;
  bool do_rerank = false;
  bool track_avg = false;
  bool fuse_meta_given = false;
  bool rerank_given = false;
  bool track_avg_given = false;

  std::vector<std::string> gamma;
  reid::RerankParams params;
  bool k1_given = false;
  bool k2_given = false;
  bool lambda_given = false;
  bool local_expansion_given = false;

  std::size_t top_n = 0;
  bool top_n_given = false;
  bool cross_camera = false;
  bool cross_camera_given = false;
  bool aicity = false;
  bool aicity_given = false;

  int workers = 0;
  bool workers_given = false;
  bool force = false;
};

// Effective pipeline settings after merging defaults, the config file and
// explicit flags (flags win).
struct PipelineSettings {
  std::string data;
  std::string out;
  bool fuse_meta = false;
  bool do_rerank = false;
  bool track_avg = false;
  reid::RerankParams params;
  std::map<std::string, double> gamma;  // explicit assignments only
  std::optional<std::size_t> top_n;
  std::optional<bool> cross_camera;  // explicit setting beats the aicity preset
  bool aicity = false;
  int workers = 0;
};

std::map<std::string, std::string> load_config_file(const fs::path& path) {
  if (!fs::exists(path)) {
    reid::fail(reid::errc::missing_file, "config file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) reid::fail(reid::errc::io_failure, "cannot open " + path.string());

  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trimmed(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      reid::fail(reid::errc::parse_error,
                 path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trimmed(text.substr(0, eq));
    const std::string value = trimmed(text.substr(eq + 1));
    if (key.empty()) {
      reid::fail(reid::errc::parse_error,
                 path.string() + ":" + std::to_string(line_no) + ": empty key");
    }
    entries[key] = value;  // later lines win
  }
  return entries;
}

void apply_config_entries(const std::map<std::string, std::string>& entries,
                          PipelineSettings& s) {
  for (const auto& [key, value] : entries) {
    if (key == "data") {
      s.data = value;
    } else if (key == "out") {
      s.out = value;
    } else if (key == "fuse_metadata") {
      s.fuse_meta = parse_bool(value, key);
    } else if (key == "rerank") {
      s.do_rerank = parse_bool(value, key);
    } else if (key == "track_average") {
      s.track_avg = parse_bool(value, key);
    } else if (key == "k1") {
      s.params.k1 = parse_size(value, key);
    } else if (key == "k2") {
      s.params.k2 = parse_size(value, key);
    } else if (key == "lambda") {
      s.params.lambda = parse_double(value, key);
    } else if (key == "local_expansion") {
      s.params.local_expansion = parse_bool(value, key);
    } else if (key == "top_n") {
      s.top_n = parse_size(value, key);
    } else if (key == "cross_camera") {
      s.cross_camera = parse_bool(value, key);
    } else if (key == "aicity") {
      s.aicity = parse_bool(value, key);
    } else if (key == "workers") {
      s.workers = static_cast<int>(parse_size(value, key));
    } else if (key.rfind("gamma.", 0) == 0) {
      const std::string family = key.substr(6);
      if (family.empty()) {
        reid::fail(reid::errc::config_invalid, "config key 'gamma.' names no family");
      }
      s.gamma[family] = parse_double(value, key);
    } else {
      reid::fail(reid::errc::config_invalid, "unknown config key '" + key + "'");
    }
  }
}

PipelineSettings merge_pipeline_settings(const PipelineArgs& args) {
  PipelineSettings s;
  if (!args.config_path.empty()) {
    apply_config_entries(load_config_file(args.config_path), s);
  }
  if (!args.data.empty()) s.data = args.data;
  if (!args.out.empty()) s.out = args.out;
  if (args.fuse_meta_given) s.fuse_meta = args.fuse_meta;
  if (args.rerank_given) s.do_rerank = args.do_rerank;
  if (args.track_avg_given) s.track_avg = args.track_avg;
  if (args.k1_given) s.params.k1 = args.params.k1;
  if (args.k2_given) s.params.k2 = args.params.k2;
  if (args.lambda_given) s.params.lambda = args.params.lambda;
  if (args.local_expansion_given) s.params.local_expansion = args.params.local_expansion;
  for (const std::string& item : args.gamma) {
    const auto [family, value] = split_assignment(item, "--gamma");
    s.gamma[family] = parse_double(value, "--gamma " + family);
  }
  if (args.aicity_given) s.aicity = args.aicity;
  if (args.top_n_given) s.top_n = args.top_n;
  if (args.cross_camera_given) s.cross_camera = args.cross_camera;
  if (args.workers_given) s.workers = args.workers;

  if (s.data.empty()) reid::fail(reid::errc::config_invalid, "pipeline needs --data (or config 'data')");
  if (s.out.empty()) reid::fail(reid::errc::config_invalid, "pipeline needs --out (or config 'out')");
  return s;
}

void run_pipeline(const PipelineArgs& args) {
  const PipelineSettings s = merge_pipeline_settings(args);
  apply_workers(s.workers);

  reid::EvalOptions options;
  if (s.aicity) {
    options.top_n = 100;
    options.cross_camera = true;
  }
  if (s.top_n) options.top_n = s.top_n;
  if (s.cross_camera) options.cross_camera = *s.cross_camera;

  const fs::path out_dir(s.out);
  std::vector<std::string> outputs = {"dist_qg.reid", "dist_joint.reid"};
  if (s.fuse_meta) {
    outputs.push_back("fused_qg.reid");
    outputs.push_back("fused_joint.reid");
  }
  if (s.do_rerank) outputs.push_back("rerank_qg.reid");
  if (s.track_avg) outputs.push_back("trackavg_qg.reid");
  outputs.push_back("report.txt");
  outputs.push_back("report.json");
  outputs.push_back("run_manifest.json");
  for (const std::string& name : outputs) require_fresh(out_dir / name, args.force);

  const reid::Dataset dataset = reid::load_dataset_dir(s.data);

  reid::FusionWeights weights = gamma_defaults(dataset.metadata);
  for (const auto& [family, value] : s.gamma) set_gamma(weights, family, value);

  ensure_directory(out_dir);

  // stage 1: raw distances
  DistancePair dist = compute_distances(dataset.embeddings, dataset.manifest);
  reid::save_matrix(dist.qg, out_dir / "dist_qg.reid");
  reid::save_matrix(dist.joint, out_dir / "dist_joint.reid");
  reid::Matrix current_qg = dist.qg;
  reid::Matrix current_joint = dist.joint;

  // stage 2: metadata fusion
  if (s.fuse_meta) {
    std::map<std::string, reid::Matrix> meta_qg;
    std::map<std::string, reid::Matrix> meta_joint;
    for (const auto& [family, values] : dataset.metadata.families) {
      DistancePair pair = compute_distances(values, dataset.manifest);
      meta_qg.emplace(family, std::move(pair.qg));
      meta_joint.emplace(family, std::move(pair.joint));
    }
    current_qg = reid::fuse_metadata(current_qg, meta_qg, weights);
    current_joint = reid::fuse_metadata(current_joint, meta_joint, weights);
    warn_if_negative(current_qg, "fused_qg");
    warn_if_negative(current_joint, "fused_joint");
    reid::save_matrix(current_qg, out_dir / "fused_qg.reid");
    reid::save_matrix(current_joint, out_dir / "fused_joint.reid");
  }

  // stage 3: k-reciprocal re-ranking
  if (s.do_rerank) {
    current_qg = reid::rerank(current_qg, current_joint, s.params);
    reid::save_matrix(current_qg, out_dir / "rerank_qg.reid");
  }

  // stage 4: track-level averaging
  if (s.track_avg) {
    current_qg = reid::track_average(current_qg, dataset.manifest);
    reid::save_matrix(current_qg, out_dir / "trackavg_qg.reid");
  }

  // stage 5: evaluation
  const reid::EvalReport report = reid::evaluate(current_qg, dataset.manifest, options);
  write_reports(report, out_dir);

  // reproducibility record
  json manifest_doc;
  manifest_doc["command"] = "pipeline";
  manifest_doc["data"] = s.data;
  manifest_doc["out"] = s.out;
  manifest_doc["workers"] = reid::max_workers();
  manifest_doc["stages"] = {{"fuse_metadata", s.fuse_meta},
                            {"rerank", s.do_rerank},
                            {"track_average", s.track_avg}};
  json gamma_doc = json::object();
  for (const auto& [family, value] : weights.gamma) gamma_doc[family] = value;
  manifest_doc["params"] = {
      {"k1", s.params.k1},
      {"k2", s.params.k2},
      {"lambda", s.params.lambda},
      {"local_expansion", s.params.local_expansion},
      {"gamma", gamma_doc},
      {"top_n", options.top_n ? json(*options.top_n) : json(nullptr)},
      {"cross_camera", options.cross_camera},
  };
  json inputs = json::object();
  const fs::path data_dir(s.data);
  inputs["manifest.csv"] = hex64(fnv1a_file(data_dir / "manifest.csv"));
  inputs["embeddings.reid"] = hex64(fnv1a_file(data_dir / "embeddings.reid"));
  for (const auto& [family, values] : dataset.metadata.families) {
    const std::string name = "meta_" + family + ".reid";
    inputs[name] = hex64(fnv1a_file(data_dir / name));
  }
  manifest_doc["inputs"] = inputs;
  manifest_doc["outputs"] = outputs;
  {
    std::ofstream out(out_dir / "run_manifest.json");
    if (!out) reid::fail(reid::errc::io_failure, "cannot write run_manifest.json");
    out << manifest_doc.dump(2) << "\n";
  }

  print_report_footer(report);
}

// ---------------------------------------------------------------------------
// loss-check

struct LossCheckArgs {
  std::uint64_t seed = 1;
  std::size_t batches = 20;
  double step = 1e-6;
  double tolerance = 1e-6;
};

reid::LabeledBatch sample_batch(reid::Rng& rng, std::size_t n, std::size_t dim,
                                std::size_t classes) {
  reid::LabeledBatch batch;
  batch.embeddings = reid::Matrix(n, dim);
  for (std::size_t i = 0; i < batch.embeddings.size(); ++i) {
    batch.embeddings.data()[i] = rng.normal();
  }
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.labels[i] = static_cast<std::uint32_t>(i % classes);
  }
  return batch;
}

int run_loss_check(const LossCheckArgs& args) {
  const double margin = 0.3;
  double worst_full = 0.0;
  double worst_hard = 0.0;
  double worst_softmax = 0.0;

  for (std::size_t b = 0; b < args.batches; ++b) {
    reid::Rng rng(args.seed + b);

    reid::LabeledBatch full = sample_batch(rng, 12, 4, 3);
    while (ref::triplet_full_degenerate(full, margin)) full = sample_batch(rng, 12, 4, 3);
    const reid::LossResult full_result = reid::triplet_loss_full(full, margin);
    worst_full = std::max(
        worst_full,
        ref::max_grad_error(
            full.embeddings, full_result.grad,
            [&full, margin](const reid::Matrix& x) {
              return reid::triplet_loss_full({x, full.labels}, margin).loss;
            },
            args.step));

    reid::LabeledBatch hard = sample_batch(rng, 16, 4, 4);
    while (ref::batch_hard_degenerate(hard, margin)) hard = sample_batch(rng, 16, 4, 4);
    const reid::LossResult hard_result = reid::triplet_loss_batch_hard(hard, margin);
    worst_hard = std::max(
        worst_hard,
        ref::max_grad_error(
            hard.embeddings, hard_result.grad,
            [&hard, margin](const reid::Matrix& x) {
              return reid::triplet_loss_batch_hard({x, hard.labels}, margin).loss;
            },
            args.step));

    std::vector<double> logits(6);
    for (double& l : logits) l = 2.0 * rng.normal();
    const std::size_t y = b % logits.size();
    const reid::ScalarLossResult soft = reid::softmax_ce_smoothed(logits, y, 0.1);
    worst_softmax = std::max(
        worst_softmax,
        ref::max_grad_error_vec(
            logits, soft.grad,
            [y](const std::vector<double>& x) {
              return reid::softmax_ce_smoothed(x, y, 0.1).loss;
            },
            args.step));
  }

  std::cout << std::scientific << std::setprecision(3);
  std::cout << "triplet_full    max rel error " << worst_full << "\n";
  std::cout << "batch_hard      max rel error " << worst_hard << "\n";
  std::cout << "softmax_ce      max rel error " << worst_softmax << "\n";
  const bool pass = worst_full <= args.tolerance && worst_hard <= args.tolerance &&
                    worst_softmax <= args.tolerance;
  std::cout << (pass ? "gradient check PASS" : "gradient check FAIL") << " (tolerance "
            << args.tolerance << ", " << args.batches << " batches)\n";
  return pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// fuse-demo

struct FuseDemoArgs {
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t channels = 8;
  std::uint64_t seed = 7;
  std::string global_path;
  std::string local_path;
  std::string out;
  bool force = false;
};

reid::FeatureMap random_map(reid::Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  reid::FeatureMap map(h, w, c);
  for (double& v : map.values()) v = rng.normal();
  return map;
}

void save_feature_map(const reid::FeatureMap& map, const fs::path& path) {
  reid::save_matrix(map.to_matrix(), path);
  json sidecar = {{"height", map.height()}, {"width", map.width()}, {"channels", map.channels()}};
  std::ofstream out(path.string() + ".json");
  if (!out) reid::fail(reid::errc::io_failure, "cannot write sidecar for " + path.string());
  out << sidecar.dump(2) << "\n";
}

int run_fuse_demo(const FuseDemoArgs& args) {
  reid::FeatureMap global_map;
  reid::FeatureMap local_map;
  if (!args.global_path.empty() || !args.local_path.empty()) {
    if (args.global_path.empty() || args.local_path.empty()) {
      reid::fail(reid::errc::config_invalid, "--global and --local must be given together");
    }
    global_map = reid::FeatureMap::from_matrix(reid::load_matrix(args.global_path), args.height,
                                               args.width);
    local_map = reid::FeatureMap::from_matrix(reid::load_matrix(args.local_path), args.height,
                                              args.width);
    if (global_map.channels() != local_map.channels()) {
      reid::fail(reid::errc::shape_mismatch, "feature maps have different channel counts");
    }
  } else {
    reid::Rng rng(args.seed);
    global_map = random_map(rng, args.height, args.width, args.channels);
    local_map = random_map(rng, args.height, args.width, args.channels);
  }

  const reid::FeatureMap glamor = reid::fuse(global_map, local_map, reid::FuseMode::glamor);
  const reid::FeatureMap counter = reid::fuse(global_map, local_map, reid::FuseMode::counter);

  bool conserved = true;
  for (std::size_t i = 0; i < glamor.size(); ++i) {
    if (glamor.values()[i] + counter.values()[i] !=
        global_map.values()[i] + local_map.values()[i]) {
      conserved = false;
      break;
    }
  }

  const auto [mask_global, mask_local] = reid::make_masks(global_map.channels());
  bool provenance = true;
  for (std::size_t h = 0; h < global_map.height() && provenance; ++h) {
    for (std::size_t w = 0; w < global_map.width() && provenance; ++w) {
      for (std::size_t c = 0; c < global_map.channels(); ++c) {
        const double expect_g = mask_global.bits[c] ? global_map.at(h, w, c) : local_map.at(h, w, c);
        const double expect_c = mask_global.bits[c] ? local_map.at(h, w, c) : global_map.at(h, w, c);
        if (std::memcmp(&expect_g, &glamor.values()[(h * glamor.width() + w) * glamor.channels() + c],
                        sizeof(double)) != 0 ||
            std::memcmp(&expect_c, &counter.values()[(h * counter.width() + w) * counter.channels() + c],
                        sizeof(double)) != 0) {
          provenance = false;
          break;
        }
      }
    }
  }

  std::cout << "conservation: " << (conserved ? "PASS" : "FAIL") << " (" << glamor.size()
            << " values, zero tolerance)\n";
  std::cout << "channel provenance: " << (provenance ? "PASS" : "FAIL") << "\n";

  if (!args.out.empty()) {
    const fs::path out_dir(args.out);
    require_fresh(out_dir / "fused_glamor.reid", args.force);
    require_fresh(out_dir / "fused_counter.reid", args.force);
    ensure_directory(out_dir);
    save_feature_map(glamor, out_dir / "fused_glamor.reid");
    save_feature_map(counter, out_dir / "fused_counter.reid");
    std::cout << "wrote fused_glamor.reid and fused_counter.reid\n";
  }
  return conserved && provenance ? 0 : 2;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"vehicle re-identification ranking pipeline"};
  app.require_subcommand(1);

  int env_workers = 0;
  if (const char* env = std::getenv("REID_RANK_WORKERS")) {
    try {
      env_workers = std::stoi(env);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring non-numeric REID_RANK_WORKERS='" << env << "'\n";
    }
    if (env_workers < 0) env_workers = 0;
  }

  int exit_code = 0;

  // synth
  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth->add_option("--out", synth_args.out, "dataset directory to create")->required();
  synth->add_option("--seed", synth_args.config.seed, "generator seed");
  synth->add_option("--identities", synth_args.config.num_identities, "identity count");
  synth->add_option("--images-per-identity", synth_args.config.images_per_identity,
                    "images per identity (1 query + rest gallery)");
  synth->add_option("--dim", synth_args.config.dim, "embedding dimension");
  synth->add_option("--intra-sigma", synth_args.config.intra_sigma, "within-identity spread");
  synth->add_option("--inter-sep", synth_args.config.inter_sep, "minimum center separation");
  synth->add_option("--cameras", synth_args.config.num_cameras, "camera count");
  synth->add_option("--track-len", synth_args.config.track_len, "gallery track length");
  synth->add_option("--meta", synth_args.meta,
                    "metadata family as family=dim, repeatable (replaces defaults)");
  synth->add_option("--meta-fidelity", synth_args.config.meta_fidelity,
                    "identity signal fraction in metadata");
  synth->add_flag("--force", synth_args.force, "overwrite existing outputs");
  synth->callback([&] { run_synth(synth_args); });

  // validate
  ValidateArgs validate_args;
  auto* validate = app.add_subcommand("validate", "cross-check a dataset directory");
  validate->add_option("--data", validate_args.data, "dataset directory")->required();
  validate->callback([&] { exit_code = run_validate(validate_args); });

  // dist
  DistArgs dist_args;
  dist_args.workers = env_workers;
  auto* dist = app.add_subcommand("dist", "compute query-gallery and joint distance matrices");
  dist->add_option("--data", dist_args.data, "dataset directory")->required();
  dist->add_option("--out", dist_args.out, "output directory")->required();
  dist->add_option("--embeddings", dist_args.embeddings,
                   "replacement embedding matrix file, repeatable; distances are averaged");
  dist->add_option("--workers", dist_args.workers, "parallel worker threads");
  dist->add_flag("--force", dist_args.force, "overwrite existing outputs");
  dist->callback([&] { run_dist(dist_args); });

  // fuse-meta
  FuseMetaArgs fuse_args;
  fuse_args.workers = env_workers;
  auto* fuse_meta = app.add_subcommand("fuse-meta", "fuse metadata distances into base matrices");
  fuse_meta->add_option("--data", fuse_args.data, "dataset directory")->required();
  fuse_meta->add_option("--base", fuse_args.base, "query-gallery distance file")->required();
  fuse_meta->add_option("--joint", fuse_args.joint, "joint square distance file")->required();
  fuse_meta->add_option("--out", fuse_args.out, "output directory")->required();
  fuse_meta->add_option("--gamma", fuse_args.gamma, "family=weight, repeatable (default 0)");
  fuse_meta->add_option("--workers", fuse_args.workers, "parallel worker threads");
  fuse_meta->add_flag("--force", fuse_args.force, "overwrite existing outputs");
  fuse_meta->callback([&] { run_fuse_meta(fuse_args); });

  // rerank
  RerankArgs rerank_args;
  rerank_args.workers = env_workers;
  auto* rerank = app.add_subcommand("rerank", "k-reciprocal re-ranking of a distance matrix");
  rerank->add_option("--base", rerank_args.base, "query-gallery distance file")->required();
  rerank->add_option("--joint", rerank_args.joint, "joint square distance file")->required();
  rerank->add_option("--out", rerank_args.out, "output directory")->required();
  rerank->add_option("--k1", rerank_args.params.k1, "reciprocal neighborhood size");
  rerank->add_option("--k2", rerank_args.params.k2, "expansion neighborhood size");
  rerank->add_option("--lambda", rerank_args.params.lambda, "original-distance blend weight");
  rerank->add_flag("--local-expansion", rerank_args.params.local_expansion,
                   "average set membership over the k2-neighborhood");
  rerank->add_option("--workers", rerank_args.workers, "parallel worker threads");
  rerank->add_flag("--force", rerank_args.force, "overwrite existing outputs");
  rerank->callback([&] { run_rerank(rerank_args); });

  // track-avg
  TrackAvgArgs track_args;
  track_args.workers = env_workers;
  auto* track_avg = app.add_subcommand("track-avg", "average distances within gallery tracks");
  track_avg->add_option("--base", track_args.base, "query-gallery distance file")->required();
  track_avg->add_option("--data", track_args.data, "dataset directory (tracks)")->required();
  track_avg->add_option("--out", track_args.out, "output directory")->required();
  track_avg->add_option("--workers", track_args.workers, "parallel worker threads");
  track_avg->add_flag("--force", track_args.force, "overwrite existing outputs");
  track_avg->callback([&] { run_track_avg(track_args); });

  // eval
  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "retrieval metrics for a distance matrix");
  eval->add_option("--base", eval_args.base, "query-gallery distance file")->required();
  eval->add_option("--data", eval_args.data, "dataset directory (labels)")->required();
  eval->add_option("--out", eval_args.out, "output directory for reports")->required();
  auto* topn_opt = eval->add_option("--top-n", eval_args.top_n, "truncate each ranking");
  auto* cc_opt = eval->add_flag("--cross-camera,!--no-cross-camera", eval_args.cross_camera,
                                "drop same-identity same-camera gallery items");
  eval->add_flag("--aicity", eval_args.aicity, "preset: top-n 100, cross-camera on");
  eval->add_flag("--force", eval_args.force, "overwrite existing outputs");
  eval->callback([&] {
    eval_args.top_n_given = topn_opt->count() > 0;
    eval_args.cross_camera_given = cc_opt->count() > 0;
    run_eval(eval_args);
  });

  // pipeline
  PipelineArgs pipe_args;
  auto* pipeline = app.add_subcommand(
      "pipeline", "dist -> fuse-meta -> rerank -> track-avg -> eval per toggles");
  pipeline->add_option("--data", pipe_args.data, "dataset directory");
  pipeline->add_option("--out", pipe_args.out, "output directory");
  pipeline->add_option("--config", pipe_args.config_path, "key = value config file (flags win)");
  auto* p_fuse = pipeline->add_flag("--fuse-meta,!--no-fuse-meta", pipe_args.fuse_meta,
                                    "enable metadata fusion stage");
  auto* p_rerank =
      pipeline->add_flag("--rerank,!--no-rerank", pipe_args.do_rerank, "enable re-ranking stage");
  auto* p_track = pipeline->add_flag("--track-avg,!--no-track-avg", pipe_args.track_avg,
                                     "enable track averaging stage");
  pipeline->add_option("--gamma", pipe_args.gamma, "family=weight, repeatable");
  auto* p_k1 = pipeline->add_option("--k1", pipe_args.params.k1, "reciprocal neighborhood size");
  auto* p_k2 = pipeline->add_option("--k2", pipe_args.params.k2, "expansion neighborhood size");
  auto* p_lambda =
      pipeline->add_option("--lambda", pipe_args.params.lambda, "original-distance blend weight");
  auto* p_locexp = pipeline->add_flag("--local-expansion,!--no-local-expansion",
                                      pipe_args.params.local_expansion, "soft Jaccard variant");
  auto* p_topn = pipeline->add_option("--top-n", pipe_args.top_n, "truncate each ranking");
  auto* p_cc = pipeline->add_flag("--cross-camera,!--no-cross-camera", pipe_args.cross_camera,
                                  "cross-camera evaluation mask");
  auto* p_aicity =
      pipeline->add_flag("--aicity,!--no-aicity", pipe_args.aicity, "preset: top-n 100, cross-camera on");
  auto* p_workers = pipeline->add_option("--workers", pipe_args.workers, "parallel worker threads");
  pipeline->add_flag("--force", pipe_args.force, "overwrite existing outputs");
  pipeline->callback([&] {
    pipe_args.fuse_meta_given = p_fuse->count() > 0;
    pipe_args.rerank_given = p_rerank->count() > 0;
    pipe_args.track_avg_given = p_track->count() > 0;
    pipe_args.k1_given = p_k1->count() > 0;
    pipe_args.k2_given = p_k2->count() > 0;
    pipe_args.lambda_given = p_lambda->count() > 0;
    pipe_args.local_expansion_given = p_locexp->count() > 0;
    pipe_args.top_n_given = p_topn->count() > 0;
    pipe_args.cross_camera_given = p_cc->count() > 0;
    pipe_args.aicity_given = p_aicity->count() > 0;
    pipe_args.workers_given = p_workers->count() > 0;
    if (!pipe_args.workers_given && env_workers > 0) {
      pipe_args.workers = env_workers;
      pipe_args.workers_given = true;
    }
    run_pipeline(pipe_args);
  });

  // loss-check
  LossCheckArgs loss_args;
  auto* loss_check =
      app.add_subcommand("loss-check", "finite-difference check of all loss gradients");
  loss_check->add_option("--seed", loss_args.seed, "base seed");
  loss_check->add_option("--batches", loss_args.batches, "batches per loss");
  loss_check->add_option("--step", loss_args.step, "finite-difference step");
  loss_check->add_option("--tolerance", loss_args.tolerance, "max relative error allowed");
  loss_check->callback([&] { exit_code = run_loss_check(loss_args); });

  // fuse-demo
  FuseDemoArgs demo_args;
  auto* fuse_demo = app.add_subcommand(
      "fuse-demo", "channel-mask fusion conservation check on random or supplied maps");
  fuse_demo->add_option("--height", demo_args.height, "feature map height");
  fuse_demo->add_option("--width", demo_args.width, "feature map width");
  fuse_demo->add_option("--channels", demo_args.channels, "channel count (random mode)");
  fuse_demo->add_option("--seed", demo_args.seed, "random map seed");
  fuse_demo->add_option("--global", demo_args.global_path, "global feature map matrix file");
  fuse_demo->add_option("--local", demo_args.local_path, "local feature map matrix file");
  fuse_demo->add_option("--out", demo_args.out, "directory for fused outputs");
  fuse_demo->add_flag("--force", demo_args.force, "overwrite existing outputs");
  fuse_demo->callback([&] { exit_code = run_fuse_demo(demo_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const reid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return reid::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}

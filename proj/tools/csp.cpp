// csp: build, query, inspect and serve conceptual-shift indexes.
//
// Exit codes: 0 ok, 2 data error, 3 degenerate input sketch, 64 usage.

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "csp/csp.hpp"
#include "csp/service.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitData = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitUsage = 64;

int fail(const csp::Error& e, int code = kExitData) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}

struct BuildOptions {
  fs::path corpus;
  fs::path embeddings;
  fs::path out;
  std::size_t k = csp::kDefaultClustersPerCategory;
  std::uint64_t seed = 1;
  std::optional<std::size_t> limit;
  std::optional<fs::path> vectors;
};

int run_build(const BuildOptions& opt) {
  try {
    const auto corpus = csp::load_corpus(opt.corpus, opt.limit);
    std::set<std::string> labels;
    for (const auto& c : corpus.manifest.categories) labels.insert(c.label);
    (void)csp::load_embeddings(opt.embeddings, labels);

    std::map<std::string, std::vector<csp::FeatureVector>> vectors;
    csp::ExtractorSpec spec = csp::builtin_extractor_spec();
    if (opt.vectors) {
      const auto table = csp::import_vectors(*opt.vectors, corpus.manifest);
      spec = {csp::ExtractorKind::kImported, table.begin()->second.values.size(),
              "imported:" + opt.vectors->filename().string()};
      for (const auto& [label, sketches] : corpus.by_category) {
        auto& out = vectors[label];
        for (const auto& s : sketches) {
          const auto it = table.find(s.source_id);
          if (it == table.end()) throw csp::Error(csp::ErrorCode::kUnknownSketchRef, "no vector for " + s.source_id);
          out.push_back(it->second);
        }
      }
    } else {
      for (const auto& [label, sketches] : corpus.by_category) {
        auto& out = vectors[label];
        out.reserve(sketches.size());
        for (const auto& s : sketches) out.push_back(csp::extract(csp::normalize(s)));
      }
    }

    const auto index = csp::build_index(vectors, opt.k, opt.seed, spec);
    csp::save_index(index, opt.out);

    std::cout << "categories " << index.model.categories.size() << "  k " << index.model.k << "  dimension "
              << index.model.dimension << "  sketches " << corpus.manifest.total_sketches << '\n';
    std::cout << std::fixed << std::setprecision(6);
    for (const auto& c : index.model.categories) {
      std::cout << "  " << std::left << std::setw(24) << c.label << std::right << " members " << std::setw(6)
                << c.member_ids.size() << "  wcss " << c.total_wcss() << "  iterations " << c.wcss_history.size()
                << '\n';
    }
    std::cout << "distance matrix " << index.matrix.size() << " x " << index.matrix.size() << '\n';
    std::cout << "wrote " << opt.out.string() << " (" << csp::index_version(index) << ")\n";
    return 0;
  } catch (const csp::Error& e) {
    return fail(e);
  }
}

struct QueryOptions {
  csp::ArtifactPaths paths;
  fs::path sketch;
  std::string label;
  std::string novelty;
  std::string source_id;
  bool json = false;
};

int run_query(const QueryOptions& opt) {
  const auto novelty = csp::parse_novelty(opt.novelty);
  if (!novelty) {
    std::cerr << "error: usage: --novelty must be low, intermediate or high\n";
    return kExitUsage;
  }
  std::shared_ptr<const csp::Artifacts> artifacts;
  csp::Sketch sketch;
  try {
    artifacts = csp::load_artifacts(opt.paths);
    std::ifstream in(opt.sketch);
    if (!in) throw csp::Error(csp::ErrorCode::kFileNotFound, opt.sketch.string());
    std::string line;
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    const auto record = nlohmann::json::parse(line, nullptr, false);
    const auto strokes = record.is_object() && record.contains("drawing")
                             ? csp::parse_drawing(record["drawing"])
                             : std::nullopt;
    if (!strokes) throw csp::Error(csp::ErrorCode::kFormatError, opt.sketch.string() + ": not a corpus record");
    sketch.label = csp::normalize_label(opt.label);
    sketch.strokes = *strokes;
    sketch.source_id = opt.source_id;
  } catch (const csp::Error& e) {
    return fail(e);
  }

  try {
    const auto response = csp::conceptual_shift(sketch, *novelty, artifacts->context());
    const auto reply = csp::to_json(
        response, *novelty,
        csp::request_id_for(sketch.label, opt.novelty, csp::drawing_to_json(sketch.strokes), sketch.source_id));
    if (opt.json) {
      std::cout << reply.dump() << '\n';
    } else {
      std::cout << std::fixed << std::setprecision(6) << "target      " << response.label << " (cluster "
                << response.candidate.target.slot << ")\n"
                << "novelty     " << csp::to_string(*novelty) << '\n'
                << "visual      " << response.candidate.visual_sim << '\n'
                << "conceptual  " << response.candidate.conceptual_sim << '\n'
                << "composite   " << response.candidate.composite << '\n'
                << "fallback    " << (response.fallback_used ? "yes" : "no") << '\n'
                << "sketch      " << response.sketch.source_id << '\n';
    }
    return 0;
  } catch (const csp::Error& e) {
    const bool degenerate =
        e.code() == csp::ErrorCode::kDegenerateSketch || e.code() == csp::ErrorCode::kEmptySketch;
    return fail(e, degenerate ? kExitDegenerate : kExitData);
  }
}

int run_inspect(const fs::path& index_path, const std::optional<std::string>& elbow) {
  try {
    const auto index = csp::load_index(index_path);
    std::cout << "format      " << csp::kIndexFormatVersion << '\n'
              << "version     " << csp::index_version(index) << '\n'
              << "extractor   " << (index.extractor.kind == csp::ExtractorKind::kBuiltin ? "builtin" : "imported")
              << " " << index.extractor.version << " (dimension " << index.extractor.dimension << ")\n"
              << "seed        " << index.seed << '\n'
              << "k           " << index.model.k << '\n'
              << "categories  " << index.model.categories.size() << '\n'
              << "matrix      " << index.matrix.size() << " x " << index.matrix.size() << '\n';
    std::cout << std::fixed << std::setprecision(6);
    for (const auto& c : index.model.categories) {
      std::cout << "  " << std::left << std::setw(24) << c.label << std::right << " members " << std::setw(6)
                << c.member_ids.size() << "  wcss " << c.total_wcss() << '\n';
    }
    if (elbow) {
      const auto& cat = index.model.at(csp::normalize_label(*elbow));
      const std::size_t k_max = std::min<std::size_t>(15, cat.member_vectors.size());
      const auto curve = csp::elbow_curve(cat.member_vectors, 1, k_max, cat.seed);
      std::cout << "elbow " << cat.label << '\n' << "  k  wcss\n";
      for (const auto& [k, w] : curve.points) std::cout << "  " << std::setw(2) << k << "  " << w << '\n';
      std::cout << "elbow_k " << curve.elbow_k << (curve.elbow_defined ? "" : " (undefined)") << '\n';
    }
    return 0;
  } catch (const csp::Error& e) {
    return fail(e);
  }
}

struct ServeOptions {
  csp::ArtifactPaths paths;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int run_serve(const ServeOptions& opt) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  csp::ShiftService service;
  httplib::Server server;
  csp::install_routes(server, service);
  if (!server.bind_to_port(opt.host, opt.port)) {
    std::cerr << "error: PortUnavailable: " << opt.host << ":" << opt.port << '\n';
    return kExitData;
  }
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  std::thread waiter([&server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });

  int rc = 0;
  try {
    service.set_artifacts(csp::load_artifacts(opt.paths));
    std::cerr << nlohmann::json{{"event", "ready"}, {"host", opt.host}, {"port", opt.port},
                                {"index_version", service.artifacts()->index_version}}
                     .dump()
              << '\n';
  } catch (const csp::Error& e) {
    rc = fail(e);
    server.stop();
  }
  listener.join();
  if (rc != 0) {
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  return rc;
}

void add_artifact_options(CLI::App* cmd, csp::ArtifactPaths& paths, bool env) {
  auto* index = cmd->add_option("--index", paths.index, "Index file written by build-index")->required();
  auto* emb = cmd->add_option("--embeddings", paths.embeddings, "Word vectors, text format")->required();
  auto* corpus = cmd->add_option("--corpus", paths.corpus, "Corpus directory of <label>.ndjson files")->required();
  cmd->add_option("--vectors", paths.vectors, "Imported feature vectors (for indexes built with --vectors)");
  if (env) {
    index->envname("CSP_INDEX");
    emb->envname("CSP_EMBEDDINGS");
    corpus->envname("CSP_CORPUS");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conceptual-shift sketch retrieval"};
  app.require_subcommand(1);

  BuildOptions build;
  auto* build_cmd = app.add_subcommand("build-index", "Cluster a sketch corpus and write an index file");
  build_cmd->add_option("--corpus", build.corpus, "Corpus directory of <label>.ndjson files")->required();
  build_cmd->add_option("--embeddings", build.embeddings, "Word vectors covering every category")->required();
  build_cmd->add_option("--out", build.out, "Index file to write")->required();
  build_cmd->add_option("--k", build.k, "Clusters per category")->check(CLI::PositiveNumber);
  build_cmd->add_option("--seed", build.seed, "Clustering seed");
  build_cmd->add_option("--limit-per-category", build.limit, "Read at most N sketches per category");
  build_cmd->add_option("--vectors", build.vectors, "Use imported feature vectors instead of the builtin extractor");

  QueryOptions query;
  auto* query_cmd = app.add_subcommand("query", "Answer one sketch with a conceptual shift");
  add_artifact_options(query_cmd, query.paths, false);
  query_cmd->add_option("--sketch", query.sketch, "File holding one corpus-format record")->required();
  query_cmd->add_option("--label", query.label, "Category of the sketch")->required();
  query_cmd->add_option("--novelty", query.novelty, "low | intermediate | high")->required();
  query_cmd->add_option("--source-id", query.source_id, "Corpus id of the sketch (imported-vector indexes)");
  query_cmd->add_flag("--json", query.json, "Print the reply as JSON");

  fs::path inspect_index;
  std::optional<std::string> elbow;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print index metadata");
  inspect_cmd->add_option("--index", inspect_index, "Index file")->required();
  inspect_cmd->add_option("--elbow", elbow, "Print the k = 1..15 WCSS table for a category");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  add_artifact_options(serve_cmd, serve.paths, true);
  serve_cmd->add_option("--port", serve.port, "Listen port")->envname("CSP_PORT");
  serve_cmd->add_option("--host", serve.host, "Listen address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (*build_cmd) return run_build(build);
  if (*query_cmd) return run_query(query);
  if (*inspect_cmd) return run_inspect(inspect_index, elbow);
  if (*serve_cmd) return run_serve(serve);
  return kExitUsage;
}

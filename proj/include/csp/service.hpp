#pragma once

// JSON-over-HTTP front end for the shift engine.
//
//   POST /v1/shift       {"label", "strokes", "novelty"} -> ShiftReply
//   GET  /v1/categories  {"categories", "k", "extractor"}
//   GET  /healthz        {"status", "index_version", "uptime_seconds"}
//
// Handlers are plain functions of (request body, loaded artifacts) so they
// can be exercised without a socket; install_routes() wires them into a
// cpp-httplib server.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "csp/cluster_index.hpp"
#include "csp/embeddings.hpp"
#include "csp/error.hpp"
#include "csp/features.hpp"
#include "csp/index_io.hpp"
#include "csp/ingestion.hpp"
#include "csp/shift_engine.hpp"

namespace csp {

struct Artifacts {
  ClusterIndex index;
  EmbeddingStore store;
  Corpus corpus;
  std::optional<VectorTable> imported;
  std::string index_version;

  ShiftContext context() const { return {index, store, corpus, imported ? &*imported : nullptr}; }
};

struct ArtifactPaths {
  std::filesystem::path index;
  std::filesystem::path embeddings;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> vectors;
};

inline std::set<std::string> index_labels(const ClusterIndex& index) {
  std::set<std::string> labels;
  for (const auto& c : index.model.categories) labels.insert(c.label);
  return labels;
}

inline std::shared_ptr<const Artifacts> load_artifacts(const ArtifactPaths& paths) {
  auto a = std::make_shared<Artifacts>();
  a->index = load_index(paths.index);
  a->index_version = index_version(a->index);
  a->store = load_embeddings(paths.embeddings, index_labels(a->index));
  a->corpus = load_corpus(paths.corpus);
  for (const auto& c : a->index.model.categories) {
    for (const auto& id : c.member_ids) {
      if (!a->corpus.find(id)) throw Error(ErrorCode::kUnknownSketchRef, id + " is in the index but not the corpus");
    }
  }
  if (paths.vectors) a->imported = import_vectors(*paths.vectors, a->corpus);
  if (a->index.extractor.kind == ExtractorKind::kImported && !a->imported) {
    throw Error(ErrorCode::kExtractorMismatch, "index was built from imported vectors; pass the vector file");
  }
  return a;
}

struct HttpReply {
  int status = 200;
  nlohmann::json body;

  std::string text() const { return body.dump(); }
};

inline HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return {status, {{"error_code", code}, {"message", message}}};
}

inline nlohmann::json to_json(const ShiftResponse& r, Novelty requested, std::string_view request_id) {
  return {
      {"request_id", request_id},
      {"target_label", r.label},
      {"target_cluster", r.candidate.target.slot},
      {"novelty", to_string(requested)},
      {"visual_similarity", r.candidate.visual_sim},
      {"conceptual_similarity", r.candidate.conceptual_sim},
      {"composite", r.candidate.composite},
      {"raw_distance", r.candidate.raw_distance},
      {"passed_filter", r.candidate.passed_filter},
      {"fallback_used", r.fallback_used},
      {"sketch_id", r.sketch.source_id},
      {"sketch", drawing_to_json(r.sketch.strokes)},
  };
}

inline std::string request_id_for(std::string_view label, std::string_view novelty, const nlohmann::json& strokes,
                                  std::string_view source_id) {
  std::string key(label);
  key += '\n';
  key += novelty;
  key += '\n';
  key += strokes.dump();
  key += '\n';
  key += source_id;
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a64(key);
  return ss.str();
}

class ShiftService {
 public:
  ShiftService() : started_(std::chrono::steady_clock::now()) {}

  void set_artifacts(std::shared_ptr<const Artifacts> artifacts) {
    std::lock_guard lock(mu_);
    artifacts_ = std::move(artifacts);
  }

  std::shared_ptr<const Artifacts> artifacts() const {
    std::lock_guard lock(mu_);
    return artifacts_;
  }

  HttpReply health() const {
    const auto a = artifacts();
    const double uptime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    nlohmann::json body = {{"status", "ok"}, {"uptime_seconds", uptime}};
    body["index_version"] = a ? nlohmann::json(a->index_version) : nlohmann::json(nullptr);
    return {200, std::move(body)};
  }

  HttpReply categories() const {
    const auto a = artifacts();
    if (!a) return error_reply(503, "not_ready", "index not loaded");
    auto labels = nlohmann::json::array();
    for (const auto& c : a->index.model.categories) labels.push_back(c.label);
    const auto& ex = a->index.extractor;
    return {200,
            {{"categories", std::move(labels)},
             {"k", a->index.model.k},
             {"extractor",
              {{"kind", ex.kind == ExtractorKind::kBuiltin ? "builtin" : "imported"},
               {"dimension", ex.dimension},
               {"version", ex.version}}}}};
  }

  HttpReply shift(std::string_view body) const {
    const auto a = artifacts();
    if (!a) return error_reply(503, "not_ready", "index not loaded");

    const auto req = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (req.is_discarded()) return error_reply(400, "bad_json", "request body is not valid JSON");
    if (!req.is_object()) return error_reply(400, "bad_request", "request body must be a JSON object");

    const auto novelty_it = req.find("novelty");
    if (novelty_it == req.end() || !novelty_it->is_string()) {
      return error_reply(400, "bad_novelty", "novelty must be one of low, intermediate, high");
    }
    const auto novelty = parse_novelty(novelty_it->get<std::string>());
    if (!novelty) return error_reply(400, "bad_novelty", "novelty must be one of low, intermediate, high");

    const auto label_it = req.find("label");
    if (label_it == req.end() || !label_it->is_string()) {
      return error_reply(400, "bad_request", "label must be a string");
    }
    const auto label = normalize_label(label_it->get<std::string>());
    if (!a->index.model.find(label)) return error_reply(404, "unknown_label", "unknown category '" + label + "'");

    const auto strokes_it = req.find("strokes");
    if (strokes_it == req.end()) return error_reply(422, "invalid_strokes", "strokes missing");
    auto strokes = parse_drawing(*strokes_it);
    if (!strokes) return error_reply(422, "invalid_strokes", "strokes must be [[xs],[ys]] arrays of 0..255 integers");

    Sketch sketch;
    sketch.label = label;
    sketch.strokes = std::move(*strokes);
    if (const auto sid = req.find("source_id"); sid != req.end() && sid->is_string()) {
      sketch.source_id = sid->get<std::string>();
    }
    const auto request_id =
        request_id_for(label, to_string(*novelty), *strokes_it, sketch.source_id);
    try {
      const auto response = conceptual_shift(sketch, *novelty, a->context());
      return {200, to_json(response, *novelty, request_id)};
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::kDegenerateSketch:
        case ErrorCode::kEmptySketch:
          return error_reply(422, "invalid_strokes", e.what());
        case ErrorCode::kUnknownCategory:
          return error_reply(404, "unknown_label", e.what());
        case ErrorCode::kExtractorMismatch:
        case ErrorCode::kUnknownSketchRef:
          return error_reply(422, "unresolvable_query", e.what());
        default:
          return error_reply(500, to_string(e.code()), e.what());
      }
    }
  }

 private:
  std::chrono::steady_clock::time_point started_;
  mutable std::mutex mu_;
  std::shared_ptr<const Artifacts> artifacts_;
};

// One JSON object per request on stderr.
inline void log_request(const httplib::Request& req, const httplib::Response& res) {
  nlohmann::json line = {{"method", req.method}, {"path", req.path}, {"status", res.status}};
  if (res.status == 200 && req.path == "/v1/shift") {
    const auto body = nlohmann::json::parse(res.body, nullptr, false);
    if (body.is_object() && body.contains("request_id")) line["request_id"] = body["request_id"];
  }
  static std::mutex log_mu;
  std::lock_guard lock(log_mu);
  std::cerr << line.dump() << '\n';
}

inline void install_routes(httplib::Server& server, const ShiftService& service, bool log = true) {
  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.text(), "application/json");
  };
  server.Post("/v1/shift", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.shift(req.body));
  });
  server.Get("/v1/categories", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.categories());
  });
  server.Get("/healthz", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.health());
  });
  // The canvas client may be served from another origin.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options("/v1/shift", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "POST, GET, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  if (log) server.set_logger(log_request);
}

}  // namespace csp

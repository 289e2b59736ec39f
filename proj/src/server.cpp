#include "reweighter/server.hpp"

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <mutex>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "reweighter/error.hpp"
#include "reweighter/serialize.hpp"

namespace rw {

namespace {

using nlohmann::json;

struct ApiFailure {
  int status;
  std::string code;
  std::string message;
  json detail;
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const json& detail = nullptr) {
  json body{{"code", code}, {"message", message}};
  body["detail"] = detail;
  send_json(res, body, status);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(errc::kMalformed, std::string("request body is not valid JSON: ") + e.what());
  }
}

bool local_origin(const std::string& origin) {
  static const std::regex re(R"(^https?://(localhost|127\.0\.0\.1|\[::1\])(:\d+)?$)");
  return std::regex_match(origin, re);
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::optional<std::size_t> index_of(const std::vector<SampleId>& ids, SampleId id) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return i;
  return std::nullopt;
}

}  // namespace

int http_status_for(const std::string& code) {
  if (code == errc::kUnknownSample || code == errc::kNotFound) return 404;
  if (code == errc::kNothingToUndo || code == errc::kNoSnapshot) return 409;
  if (code == errc::kPayloadTooLarge) return 413;
  if (code == errc::kDegenerateWeights || code == errc::kDegenerateWeightMass || code == errc::kNoQualityEvidence ||
      code == errc::kNumerical)
    return 422;
  if (code == errc::kIo || code == errc::kInternal) return 500;
  return 400;
}

struct ApiServer::Impl {
  ServerOptions options;
  httplib::Server http;
  std::thread thread;
  int port = -1;

  // Writer side: the master session and staged adjustments, both guarded by
  // `writer`.
  std::mutex writer;
  std::unique_ptr<Session> master;
  std::vector<Adjustment> staged;

  // Reader side: immutable view published after each mutation.
  struct View {
    std::shared_ptr<const Session> session;
    std::vector<Adjustment> staged;
    std::string hash;
  };
  mutable std::mutex view_mutex;
  std::shared_ptr<const View> view;
  std::atomic<bool> recomputing{false};
  std::string last_error;  // guarded by view_mutex

  explicit Impl(std::unique_ptr<Session> s, ServerOptions o) : options(std::move(o)), master(std::move(s)) {
    publish();
    routes();
  }

  std::shared_ptr<const View> current() const {
    std::lock_guard<std::mutex> lock(view_mutex);
    return view;
  }

  // Caller holds `writer` (or is the constructor).
  void publish() {
    auto v = std::make_shared<View>();
    v->session = std::make_shared<const Session>(*master);
    v->staged = staged;
    json staged_json = staged;
    v->hash = fnv_hex(master->statehash() + staged_json.dump());
    std::lock_guard<std::mutex> lock(view_mutex);
    view = std::move(v);
  }

  template <typename Fn>
  void handle(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, errc::kMalformed, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, errc::kInternal, e.what());
    }
  }

  static std::vector<Adjustment> parse_adjustments(const json& body) {
    const json& list = body.is_object() && body.contains("adjustments") ? body.at("adjustments") : body;
    if (!list.is_array()) throw Error(errc::kMalformed, "expected a list of adjustments");
    std::vector<Adjustment> out;
    for (const json& a : list) out.push_back(parse_as<Adjustment>(a, "adjustment"));
    return out;
  }

  static json graph_summary(const Session& s) {
    const BipartiteGraph& g = s.state().graph;
    json j;
    j["epoch"] = s.state().epoch;
    j["m"] = g.m();
    j["n"] = g.n();
    j["val_ids"] = g.val_ids;
    j["train_ids"] = g.train_ids;
    j["val_weights"] = g.val_weights;
    j["train_weights"] = training_weights(g);
    j["confidences"] = g.confidences;
    j["sigma"] = s.state().sigma;
    return j;
  }

  static json sample_json(const Session& s, Side side, std::size_t idx, const std::vector<double>& w_s,
                          const std::vector<Glyph>& glyphs) {
    const BipartiteGraph& g = s.state().graph;
    const SampleId id = side == Side::Training ? g.train_ids[idx] : g.val_ids[idx];
    const Sample& sample = s.dataset().at(id);
    json j{{"id", id}, {"payload", sample.payload}};
    if (side == Side::Training) {
      j["weight"] = w_s[idx];
      j["label"] = sample.observed_label;
      j["confidence"] = g.confidences.empty() ? json(nullptr) : json(g.confidences[idx]);
      j["glyph"] = glyphs[idx];
    } else {
      j["weight"] = g.val_weights[idx];
      j["label"] = s.state().val_rows[idx].label;
    }
    return j;
  }

  void routes() {
    http.set_payload_max_length(options.max_payload);
    // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a
    // second server share a port that is already in use.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });

    http.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
      const std::string origin = req.get_header_value("Origin");
      if (!origin.empty() && local_origin(origin)) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      }
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 413) send_error(res, 413, errc::kPayloadTooLarge, "request body exceeds the size limit");
      else if (res.status == 404) send_error(res, 404, errc::kNotFound, "no such endpoint");
      else send_error(res, res.status, errc::kInvalidArgument, "request rejected");
    });

    http.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, json{{"status", "ok"}});
    });

    http.Get("/api/statehash", [this](const httplib::Request&, httplib::Response& res) {
      const auto v = current();
      send_json(res, json{{"statehash", v->hash},
                          {"epoch", v->session->state().epoch},
                          {"staged", v->staged.size()},
                          {"undo_depth", v->session->undo_stack().size()}});
    });

    http.Get("/api/graph", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] { send_json(res, graph_summary(*current()->session)); });
    });

    http.Get("/api/layout", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        const auto v = current();
        send_json(res, json{{"epoch", v->session->state().epoch}, {"layout", v->session->state().layout}});
      });
    });

    http.Get("/api/clusters", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        const auto v = current();
        const SessionState& s = v->session->state();
        json body{{"epoch", s.epoch}, {"clustering", s.clustering}, {"layout", s.layout}};
        body["purity"] = purity(s.clustering).per_block;
        send_json(res, body);
      });
    });

    http.Get(R"(/api/cluster/([vt])(\d+)/samples)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto v = current();
        const Session& session = *v->session;
        const SessionState& s = session.state();
        const bool training = req.matches[1] == "t";
        const std::size_t cluster = std::stoul(req.matches[2]);
        const auto& clusters = training ? s.layout.col_clusters : s.layout.row_clusters;
        if (cluster >= clusters.size())
          throw Error(errc::kNotFound, "no cluster " + std::string(req.matches[1]) + std::to_string(cluster));
        std::size_t budget = session.config().layout.representative_budget;
        if (req.has_param("budget")) {
          const long b = std::stol(req.get_param_value("budget"));
          if (b < 1) throw Error(errc::kInvalidArgument, "budget must be >= 1");
          budget = static_cast<std::size_t>(b);
        }
        const BipartiteGraph& g = s.graph;
        const auto& members = clusters[cluster];
        const auto& ids = training ? g.train_ids : g.val_ids;
        std::vector<SampleId> member_ids;
        Matrix features(0, session.dataset().feature_dim());
        std::vector<bool> flags;
        for (std::size_t idx : members) {
          if (idx >= ids.size()) continue;  // rows added after the last recompute
          member_ids.push_back(ids[idx]);
          features.append_row(session.dataset().at(ids[idx]).features);
          flags.push_back(training && s.quality.entries.contains(ids[idx]));
        }
        const auto chosen = member_ids.empty() ? std::vector<SampleId>{}
                                               : sample_representatives(member_ids, features, flags, budget,
                                                                        session.config().layout.seed + cluster);
        const std::vector<double> w_s = training_weights(g);
        std::vector<double> conf = g.confidences;
        if (conf.empty()) conf.assign(g.n(), 1.0);
        const auto glyphs = classify_glyphs(w_s, conf);
        json samples = json::array();
        for (SampleId id : chosen) {
          const std::size_t idx = *index_of(ids, id);
          json sj = sample_json(session, training ? Side::Training : Side::Validation, idx, w_s, glyphs);
          const SamplePosition& p = training ? s.layout.train_positions[idx] : s.layout.val_positions[idx];
          sj["x"] = p.x;
          sj["y"] = p.y;
          samples.push_back(sj);
        }
        send_json(res, json{{"epoch", s.epoch},
                            {"cluster", std::string(req.matches[1]) + std::to_string(cluster)},
                            {"side", training ? "training" : "validation"},
                            {"size", members.size()},
                            {"samples", samples}});
      });
    });

    http.Post("/api/select", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const json body = parse_body(req);
        const auto ids = body.at("sample_ids").get<std::vector<SampleId>>();
        const std::string side_name = body.at("side").get<std::string>();
        if (side_name != "validation" && side_name != "training")
          throw Error(errc::kInvalidArgument, "side must be \"validation\" or \"training\"");
        const Side side = side_name == "training" ? Side::Training : Side::Validation;
        const auto v = current();
        const Session& session = *v->session;
        const BipartiteGraph& g = session.state().graph;
        const std::vector<double> w_s = training_weights(g);
        std::vector<double> conf = g.confidences;
        if (conf.empty()) conf.assign(g.n(), 1.0);
        const auto glyphs = classify_glyphs(w_s, conf);
        const Side other = side == Side::Training ? Side::Validation : Side::Training;
        const auto& other_ids = other == Side::Training ? g.train_ids : g.val_ids;
        auto contribution_json = [&](const Contribution& c) {
          json cj = sample_json(session, other, *index_of(other_ids, c.id), w_s, glyphs);
          cj["value"] = c.value;
          return cj;
        };
        json rows = json::array();
        for (SampleId id : ids) {
          const Contributors top = top_contributors(g, side, id);
          const auto& own_ids = side == Side::Training ? g.train_ids : g.val_ids;
          json row = sample_json(session, side, *index_of(own_ids, id), w_s, glyphs);
          row["side"] = side_name;
          row["positive"] = json::array();
          row["negative"] = json::array();
          for (const Contribution& c : top.positive) row["positive"].push_back(contribution_json(c));
          for (const Contribution& c : top.negative) row["negative"].push_back(contribution_json(c));
          rows.push_back(row);
        }
        send_json(res, json{{"epoch", session.state().epoch}, {"rows", rows}});
      });
    });

    http.Post("/api/adjustments", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const std::vector<Adjustment> batch = parse_adjustments(parse_body(req));
        const bool immediate = req.has_param("apply") && req.get_param_value("apply") == "immediate";
        std::lock_guard<std::mutex> lock(writer);
        std::vector<std::uint64_t> seqs;
        if (immediate) {
          if (!staged.empty()) throw Error(errc::kInvalidArgument, "staged adjustments pending; recompute or undo first");
          seqs = master->apply_batch(batch);
        } else {
          // Validate the whole staged list on a scratch copy.
          Session scratch = *master;
          std::vector<Adjustment> all = staged;
          all.insert(all.end(), batch.begin(), batch.end());
          const auto all_seqs = scratch.apply_batch(all);
          seqs.assign(all_seqs.end() - static_cast<std::ptrdiff_t>(batch.size()), all_seqs.end());
          staged = std::move(all);
        }
        publish();
        send_json(res, json{{"epoch", master->state().epoch},
                            {"sequences", seqs},
                            {"staged", !immediate},
                            {"pending", staged.size()}});
      });
    });

    http.Post("/api/recompute", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        std::lock_guard<std::mutex> lock(writer);
        recomputing = true;
        try {
          Session next = *master;
          next.apply_batch(staged);
          const RecomputeSummary summary = next.recompute();
          *master = std::move(next);
          staged.clear();
          recomputing = false;
          {
            std::lock_guard<std::mutex> vl(view_mutex);
            last_error.clear();
          }
          publish();
          send_json(res, json{{"epoch", summary.epoch},
                              {"diff", summary.diff},
                              {"iterations", summary.iterations},
                              {"converged", summary.converged},
                              {"stationary", summary.stationary}});
        } catch (const std::exception& e) {
          recomputing = false;
          std::lock_guard<std::mutex> vl(view_mutex);
          last_error = e.what();
          throw;
        }
      });
    });

    http.Get("/api/recompute/status", [this](const httplib::Request&, httplib::Response& res) {
      const auto v = current();
      std::string err;
      {
        std::lock_guard<std::mutex> lock(view_mutex);
        err = last_error;
      }
      json body{{"running", recomputing.load()}, {"epoch", v->session->state().epoch}, {"pending", v->staged.size()}};
      body["last_error"] = err.empty() ? json(nullptr) : json(err);
      send_json(res, body);
    });

    http.Get("/api/diff", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        double pct = 10.0;
        if (req.has_param("pct")) {
          try {
            pct = std::stod(req.get_param_value("pct"));
          } catch (const std::exception&) {
            throw Error(errc::kInvalidArgument, "pct must be a number");
          }
        }
        const auto v = current();
        const SessionState& s = v->session->state();
        const Snapshot* snap = nullptr;
        for (auto it = s.snapshots.rbegin(); it != s.snapshots.rend(); ++it)
          if (it->name == "pre-recompute") {
            snap = &*it;
            break;
          }
        if (!snap) throw Error(errc::kNoSnapshot, "no recompute has happened yet");
        const auto w_s = training_weights(s.graph);
        if (snap->w_s.size() != w_s.size()) throw Error(errc::kDimensionMismatch, "snapshot does not match the graph");
        json body = compute_diff(s.graph.train_ids, snap->w_s, w_s, pct);
        body["epoch"] = s.epoch;
        send_json(res, body);
      });
    });

    http.Post("/api/undo", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        std::lock_guard<std::mutex> lock(writer);
        bool unstaged = false;
        if (!staged.empty()) {
          staged.pop_back();
          unstaged = true;
        } else {
          master->undo();
        }
        publish();
        send_json(res, json{{"epoch", master->state().epoch},
                            {"unstaged", unstaged},
                            {"pending", staged.size()},
                            {"undo_depth", master->undo_stack().size()}});
      });
    });

    http.Post("/api/finetune", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        std::lock_guard<std::mutex> lock(writer);
        const FineTuneMetrics m = master->fine_tune();
        publish();
        json body = m;
        body["epoch"] = master->state().epoch;
        send_json(res, body);
      });
    });

    http.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] { res.set_content(session_to_json_text(*current()->session), "application/json"); });
    });

    http.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const LoadMode mode =
            req.has_param("mode") && req.get_param_value("mode") == "replay" ? LoadMode::Replay : LoadMode::Restore;
        auto loaded = std::make_unique<Session>(session_from_json_text(req.body, mode));
        std::lock_guard<std::mutex> lock(writer);
        master = std::move(loaded);
        staged.clear();
        publish();
        send_json(res, json{{"epoch", master->state().epoch}, {"statehash", current()->hash}});
      });
    });

    if (!options.ui_dir.empty() && std::filesystem::is_directory(options.ui_dir))
      http.set_mount_point("/ui", options.ui_dir.string());
  }
};

ApiServer::ApiServer(std::unique_ptr<Session> session, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(session), std::move(options))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  const int requested = impl_->options.port;
  int port = -1;
  if (requested == 0) {
    port = impl_->http.bind_to_any_port(impl_->options.host);
  } else if (impl_->http.bind_to_port(impl_->options.host, requested)) {
    port = requested;
  }
  if (port < 0)
    throw Error(errc::kIo, "cannot bind " + impl_->options.host + ":" + std::to_string(requested) +
                               " (port in use or unavailable)");
  impl_->port = port;
  return port;
}

void ApiServer::listen() { impl_->http.listen_after_bind(); }

int ApiServer::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return port;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rw

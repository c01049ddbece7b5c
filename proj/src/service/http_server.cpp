#include "dstage/service/http_server.hpp"

#include <httplib.h>

#include "dstage/script/serialization.hpp"

namespace dstage::service {

namespace {

Json error_body(std::string code, std::string message, Json violations = Json::array()) {
  return {{"error", {{"code", std::move(code)}, {"message", std::move(message)}, {"violations", std::move(violations)}}}};
}

void send_json(httplib::Response& res, int status, const Json& doc) {
  res.status = status;
  res.set_content(canonical_dump(doc), "application/json");
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  auto doc = Json::parse(req.body, nullptr, false);
  if (doc.is_discarded()) throw BadRequestError("request body is not valid JSON");
  if (!doc.is_object()) throw BadRequestError("request body must be a JSON object");
  return doc;
}

std::optional<std::string> header(const httplib::Request& req, const char* name) {
  if (!req.has_header(name)) return std::nullopt;
  return req.get_header_value(name);
}

std::string sse_frame(const StreamEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + canonical_dump(to_json(e)) + "\n\n";
}

}  // namespace

std::pair<int, Json> error_response(const std::exception& e) {
  if (auto* v = dynamic_cast<const ValidationError*>(&e)) {
    Json violations = Json::array();
    for (const auto& x : v->report().violations) violations.push_back({{"path", x.path}, {"message", x.message}});
    return {422, error_body("validation_error", e.what(), std::move(violations))};
  }
  if (auto* p = dynamic_cast<const ParseError*>(&e))
    return {422, error_body("validation_error", e.what(), Json::array({{{"path", p->path()}, {"message", e.what()}}}))};
  if (dynamic_cast<const sim::CommandError*>(&e)) return {422, error_body("command_rejected", e.what())};
  if (dynamic_cast<const BadRequestError*>(&e)) return {400, error_body("bad_request", e.what())};
  if (dynamic_cast<const NotFoundError*>(&e)) return {404, error_body("not_found", e.what())};
  if (dynamic_cast<const ConflictError*>(&e)) return {409, error_body("conflict", e.what())};
  return {500, error_body("internal", e.what())};
}

struct HttpServer::Impl {
  RunService& service;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(RunService& s) : service(s) { routes(); }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const std::exception& e) {
        auto [status, body] = error_response(e);
        send_json(res, status, body);
      }
    };
  }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Post("/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      auto it = body.find("requirement");
      if (it == body.end() || !it->is_object()) {
        ValidationReport report;
        report.add("requirement", "is required");
        throw ValidationError(report);
      }
      const auto requirement = parse_requirement(*it);
      const auto settings = settings_from_json(body.value("config", Json::object()));
      const auto record = service.create_run(requirement, settings);
      send_json(res, 201, {{"run_id", record.id}, {"phase", to_string(record.phase)}});
    }));

    server.Get("/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
      Json runs = Json::array();
      for (const auto& id : service.list()) {
        const auto r = service.record(id);
        runs.push_back({{"run_id", r.id}, {"phase", to_string(r.phase)}, {"created_at", r.created_at}});
      }
      send_json(res, 200, {{"runs", runs}});
    }));

    server.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, service.get_state(req.matches[1]));
    }));

    server.Get(R"(/runs/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, service.report(req.matches[1]));
    }));

    server.Post(R"(/runs/([^/]+)/emergent-events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 202, service.post_event(req.matches[1], parse_body(req), header(req, "Idempotency-Key")));
    }));

    server.Post(R"(/runs/([^/]+)/overrides)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 202, service.post_override(req.matches[1], parse_body(req), header(req, "Idempotency-Key")));
    }));

    server.Post(R"(/runs/([^/]+)/advance)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      auto days = body.find("days");
      if (days != body.end() && !days->is_number_integer()) {
        ValidationReport report;
        report.add("days", "must be an integer");
        throw ValidationError(report);
      }
      send_json(res, 202, service.advance(req.matches[1], days == body.end() ? 1 : days->get<int>()));
    }));

    server.Post(R"(/runs/([^/]+)/revise)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto record = service.revise(req.matches[1], parse_body(req));
      send_json(res, 201, {{"run_id", record.id}, {"phase", to_string(record.phase)}, {"revised_from", req.matches[1]}});
    }));

    server.Get(R"(/runs/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      service.record(id);  // not-found before the stream opens
      std::uint64_t last = 0;
      std::string resume = req.has_header("Last-Event-ID") ? req.get_header_value("Last-Event-ID")
                                                           : req.get_param_value("last_event_id");
      if (!resume.empty()) {
        try {
          last = std::stoull(resume);
        } catch (const std::exception&) {
          throw BadRequestError("Last-Event-ID must be an event sequence number");
        }
      }
      auto cursor = std::make_shared<std::uint64_t>(last);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
        bool terminal = false;
        const auto events = service.wait_events(id, *cursor, std::chrono::milliseconds(1000), terminal);
        for (const auto& e : events) {
          const auto frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
          *cursor = e.seq;
        }
        if ((terminal && service.events_after(id, *cursor).empty()) || stopping) {
          sink.done();
          return true;
        }
        if (events.empty()) {
          static const std::string ping = ": keep-alive\n\n";
          if (!sink.write(ping.data(), ping.size())) return false;
        }
        return true;
      });
    }));
  }
};

HttpServer::HttpServer(RunService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

}  // namespace dstage::service

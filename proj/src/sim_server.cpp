#include "crowdseed/sim_server.hpp"

#include <httplib.h>

#include "crowdseed/wire.hpp"

namespace crowdseed {

namespace {

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    nlohmann::json body{{"error", {{"code", code}, {"message", message}}}};
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

WireServer::WireServer(std::shared_ptr<Segmenter> segmenter, std::string model)
    : segmenter_(std::move(segmenter)), model_(std::move(model)), server_(std::make_unique<httplib::Server>()) {
    server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(wire::health_body(model_).dump(), "application/json");
    });
    server_->Post("/v1/segment", [this](const httplib::Request& req, httplib::Response& res) {
        SegmentRequest request;
        try {
            request = wire::decode_request(nlohmann::json::parse(req.body));
        } catch (const nlohmann::json::exception& e) {
            reply_error(res, 400, "ParseError", e.what());
            return;
        } catch (const Error& e) {
            reply_error(res, 400, to_string(e.code()), e.message());
            return;
        }
        try {
            res.set_content(wire::encode_response(segmenter_->segment(request)).dump(), "application/json");
        } catch (const Error& e) {
            const int status = e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::OutOfBounds ? 400 : 500;
            reply_error(res, status, to_string(e.code()), e.message());
        } catch (const std::exception& e) {
            reply_error(res, 500, "Internal", e.what());
        }
    });
}

WireServer::~WireServer() { stop(); }

namespace {

int bind_server(httplib::Server& server, const std::string& host, int port) {
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

}  // namespace

int WireServer::start(const std::string& host, int port) {
    const int bound = bind_server(*server_, host, port);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void WireServer::listen(const std::string& host, int port, const std::function<void(int)>& on_bound) {
    const int bound = bind_server(*server_, host, port);
    if (on_bound) on_bound(bound);
    if (!server_->listen_after_bind()) throw Error(ErrorCode::Io, "server on " + host + " stopped with an error");
}

void WireServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace crowdseed

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "crowdseed/segmenter.hpp"

namespace httplib {
class Server;
}

namespace crowdseed {

/// Serves any Segmenter over wire protocol v1 (POST /v1/segment, GET /v1/health).
class WireServer {
public:
    WireServer(std::shared_ptr<Segmenter> segmenter, std::string model);
    ~WireServer();
    WireServer(const WireServer&) = delete;
    WireServer& operator=(const WireServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Binds, calls on_bound with the bound port, then serves on the calling thread until stop().
    void listen(const std::string& host, int port, const std::function<void(int)>& on_bound = {});
    void stop();

private:
    std::shared_ptr<Segmenter> segmenter_;
    std::string model_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace crowdseed

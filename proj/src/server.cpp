#include <atomic>
#include <iostream>

// Eigen must come before httplib: <resolv.h> defines a `_res` macro.
#include "crimelens/service.hpp"

#include "httplib.h"

namespace crimelens {

namespace {

std::atomic<httplib::Server*> g_server{nullptr};

void install_routes(httplib::Server& srv, Api& api) {
    auto dispatch = [&api](const httplib::Request& req, httplib::Response& res) {
        std::string session = req.get_header_value("X-Session");
        if (session.empty() && req.has_param("session")) session = req.get_param_value("session");
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query[k] = v;
        const auto out = api.handle(req.method, req.path, session, req.body, query);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    srv.Post(R"(/.*)", dispatch);
    srv.Get(R"(/.*)", dispatch);
    srv.Delete(R"(/.*)", dispatch);
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "unhandled error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"code", "internal"}, {"message", message}}.dump(), "application/json");
    });
}

}  // namespace

void run_server(Api& api, const std::string& host, int port) {
    httplib::Server srv;
    install_routes(srv, api);
    g_server = &srv;
    const bool ok = srv.listen(host, port);
    g_server = nullptr;
    if (!ok) throw InputError("cannot listen on " + host + ":" + std::to_string(port));
}

void run_server_any_port(Api& api, const std::string& host, std::function<void(int)> bound) {
    httplib::Server srv;
    install_routes(srv, api);
    const int port = srv.bind_to_any_port(host);
    if (port < 0) throw InputError("cannot bind " + host);
    g_server = &srv;
    bound(port);
    srv.listen_after_bind();
    g_server = nullptr;
}

void stop_server() {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace crimelens

#pragma once

#include <atomic>
#include <charconv>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "gridward/bridge.hpp"

namespace gridward::bridge {

namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct Route {
   std::string id;
   std::string tail;  // "", "observation", "suggestion", "step", "events"
   std::string query;
   bool sessions_root = false;
};

/// Splits /sessions[/{id}[/{tail}]][?query].
inline std::optional<Route> parse_route(std::string_view target)
{
   Route r;
   if(auto q = target.find('?'); q != std::string_view::npos) {
      r.query = std::string(target.substr(q + 1));
      target = target.substr(0, q);
   }
   constexpr std::string_view root = "/sessions";
   if(target.substr(0, root.size()) != root)
      return std::nullopt;
   target.remove_prefix(root.size());
   if(target.empty() || target == "/") {
      r.sessions_root = true;
      return r;
   }
   if(target.front() != '/')
      return std::nullopt;
   target.remove_prefix(1);
   const auto slash = target.find('/');
   r.id = std::string(target.substr(0, slash));
   if(slash != std::string_view::npos)
      r.tail = std::string(target.substr(slash + 1));
   if(r.id.empty() || r.tail.find('/') != std::string::npos)
      return std::nullopt;
   return r;
}

inline std::uint64_t query_u64(const std::string& query, std::string_view key)
{
   std::size_t pos = 0;
   while(pos < query.size()) {
      auto amp = query.find('&', pos);
      if(amp == std::string::npos)
         amp = query.size();
      std::string_view kv(query.data() + pos, amp - pos);
      if(auto eq = kv.find('='); eq != std::string_view::npos && kv.substr(0, eq) == key) {
         std::uint64_t v = 0;
         const auto val = kv.substr(eq + 1);
         std::from_chars(val.data(), val.data() + val.size(), v);
         return v;
      }
      pos = amp + 1;
   }
   return 0;
}

/// HTTP+JSON API and WebSocket event stream on one port. One thread per
/// connection.
class Server {
  public:
   Server(SessionManager& manager, const std::string& address, unsigned short port)
       : manager_(manager), acceptor_(ioc_)
   {
      const tcp::endpoint ep(asio::ip::make_address(address), port);
      acceptor_.open(ep.protocol());
      acceptor_.set_option(asio::socket_base::reuse_address(true));
      acceptor_.bind(ep);
      acceptor_.listen();
   }

   ~Server() { stop(); }

   [[nodiscard]] unsigned short port() const { return acceptor_.local_endpoint().port(); }

   void start()
   {
      running_ = true;
      accept_thread_ = std::thread([this] { accept_loop(); });
   }

   /// Runs the accept loop on the calling thread.
   void run()
   {
      running_ = true;
      accept_loop();
   }

   void stop()
   {
      if(!running_.exchange(false))
         return;
      beast::error_code ec;
      {
         // A blocking accept only returns on a connection.
         asio::io_context wake_ioc;
         tcp::socket wake(wake_ioc);
         wake.connect({asio::ip::make_address("127.0.0.1"), port()}, ec);
      }
      acceptor_.close(ec);
      if(accept_thread_.joinable())
         accept_thread_.join();
      std::list<std::thread> workers;
      {
         std::lock_guard lock(workers_mutex_);
         for(auto& s : open_sockets_)
            s->shutdown(tcp::socket::shutdown_both, ec);
         workers.swap(workers_);
      }
      for(auto& t : workers)
         if(t.joinable())
            t.join();
   }

  private:
   using Request = http::request<http::string_body>;
   using Response = http::response<http::string_body>;

   void accept_loop()
   {
      while(running_) {
         auto socket = std::make_shared<tcp::socket>(ioc_);
         beast::error_code ec;
         acceptor_.accept(*socket, ec);
         if(ec) {
            if(!running_)
               break;
            continue;
         }
         std::lock_guard lock(workers_mutex_);
         open_sockets_.push_back(socket);
         workers_.emplace_back([this, socket] {
            session(socket);
            std::lock_guard l(workers_mutex_);
            open_sockets_.remove(socket);
         });
      }
   }

   void session(const std::shared_ptr<tcp::socket>& socket)
   {
      beast::error_code ec;
      beast::flat_buffer buffer;
      for(;;) {
         Request req;
         http::read(*socket, buffer, req, ec);
         if(ec)
            break;
         if(websocket::is_upgrade(req)) {
            stream_events(std::move(*socket), req);
            return;
         }
         auto res = handle(req);
         res.keep_alive(req.keep_alive());
         http::write(*socket, res, ec);
         if(ec || !res.keep_alive())
            break;
      }
      socket->shutdown(tcp::socket::shutdown_send, ec);
   }

   static Response reply(const Request& req, http::status status, const json& body)
   {
      Response res{status, req.version()};
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      res.set(http::field::access_control_allow_methods, "GET, POST, DELETE, OPTIONS");
      if(status != http::status::no_content)
         res.body() = body.dump();
      res.prepare_payload();
      return res;
   }

   Response handle(const Request& req)
   {
      try {
         if(req.method() == http::verb::options)
            return reply(req, http::status::no_content, json::object());
         if(req.target() == "/health")
            return reply(req, http::status::ok, {{"status", "ok"}, {"sessions", manager_.size()}});
         const auto route = parse_route(std::string_view(req.target().data(), req.target().size()));
         if(!route)
            return reply(req, http::status::not_found, {{"error", "no such route"}});
         const auto body = [&] {
            if(req.body().empty())
               return json::object();
            try {
               return json::parse(req.body());
            } catch(const json::exception& e) {
               throw BridgeError(400, std::string("malformed JSON body: ") + e.what());
            }
         };
         const auto m = req.method();
         if(route->sessions_root && m == http::verb::post)
            return reply(req, http::status::ok, manager_.create(body()));
         if(!route->sessions_root) {
            if(route->tail.empty() && m == http::verb::delete_) {
               manager_.remove(route->id);
               return reply(req, http::status::ok, {{"id", route->id}, {"deleted", true}});
            }
            if(route->tail == "observation" && m == http::verb::get)
               return reply(req, http::status::ok, manager_.observation(route->id));
            if(route->tail == "suggestion" && m == http::verb::get)
               return reply(req, http::status::ok, manager_.suggestion(route->id));
            if(route->tail == "step" && m == http::verb::post)
               return reply(req, http::status::ok, manager_.step(route->id, body()));
            if(route->tail == "events")
               return reply(req, http::status::upgrade_required, {{"error", "use a WebSocket"}});
         }
         return reply(req, http::status::method_not_allowed, {{"error", "method not allowed"}});
      } catch(const BridgeError& e) {
         return reply(req, static_cast<http::status>(e.status()), {{"error", e.what()}});
      } catch(const std::exception& e) {
         return reply(req, http::status::bad_request, {{"error", e.what()}});
      }
   }

   void stream_events(tcp::socket socket, const Request& req)
   {
      const auto route = parse_route(std::string_view(req.target().data(), req.target().size()));
      websocket::stream<tcp::socket> ws(std::move(socket));
      beast::error_code ec;
      ws.accept(req, ec);
      if(ec)
         return;
      if(!route || route->tail != "events") {
         ws.close({websocket::close_code::policy_error, "no such stream"}, ec);
         return;
      }
      std::uint64_t after = query_u64(route->query, "from");
      ws.text(true);
      while(running_) {
         bool closed = false;
         std::vector<Event> batch;
         try {
            batch = manager_.events(route->id, after, std::chrono::milliseconds(200), closed);
         } catch(const BridgeError& e) {
            ws.close({websocket::close_code::policy_error, e.what()}, ec);
            return;
         }
         for(const auto& e : batch) {
            ws.write(asio::buffer(e.to_json().dump()), ec);
            if(ec)
               return;
            after = e.seq;
         }
         if(closed) {
            ws.close(websocket::close_code::normal, ec);
            return;
         }
      }
      ws.close(websocket::close_code::going_away, ec);
   }

   SessionManager& manager_;
   asio::io_context ioc_;
   tcp::acceptor acceptor_;
   std::atomic<bool> running_{false};
   std::thread accept_thread_;
   std::mutex workers_mutex_;
   std::list<std::thread> workers_;
   std::list<std::shared_ptr<tcp::socket>> open_sockets_;
};

}  // namespace gridward::bridge

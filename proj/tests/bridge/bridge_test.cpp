#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <thread>

#include "../support/fixtures.hpp"
#include "gridward/bridge_server.hpp"

using namespace gridward;
using namespace gridward::bridge;
using fixtures::TempDir;

namespace {

json create_body(const std::string& assistant = "dn+rba1", std::uint64_t seed = 1)
{
   return {{"case", "toy5"}, {"scenario", {{"dir", "toy5_week_flat"}}}, {"seed", seed}, {"assistant", assistant}};
}

int status_of(const std::function<void()>& f)
{
   try {
      f();
   } catch(const BridgeError& e) {
      return e.status();
   }
   return 0;
}

std::vector<Event> drain(SessionManager& m, const std::string& id)
{
   bool closed = false;
   return m.events(id, 0, std::chrono::milliseconds(0), closed);
}

/// toy5 with only the radial spur attackable: the first attack islands S5.
std::filesystem::path spur_case(const TempDir& tmp)
{
   std::ifstream in(fixtures::data_path("cases/toy5.json"));
   auto doc = json::parse(in);
   doc["attackable_lines"] = {"L6"};
   const auto p = tmp.path() / "spur.json";
   std::ofstream(p) << doc.dump();
   return p;
}

// ---------------------------------------------------------------------------
// minimal HTTP/WebSocket client
// ---------------------------------------------------------------------------
struct Reply {
   int status = 0;
   json body;
};

Reply request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = "")
{
   asio::io_context ioc;
   tcp::socket sock(ioc);
   sock.connect({asio::ip::make_address("127.0.0.1"), port});
   http::request<http::string_body> req{verb, target, 11};
   req.set(http::field::host, "127.0.0.1");
   req.set(http::field::content_type, "application/json");
   req.body() = body;
   req.prepare_payload();
   http::write(sock, req);
   beast::flat_buffer buf;
   http::response<http::string_body> res;
   http::read(sock, buf, res);
   beast::error_code ec;
   sock.shutdown(tcp::socket::shutdown_both, ec);
   Reply r;
   r.status = static_cast<int>(res.result_int());
   r.body = res.body().empty() ? json() : json::parse(res.body());
   return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// session manager
// ---------------------------------------------------------------------------
TEST(Sessions, CreateReturnsInitialObservation)
{
   SessionManager m;
   const auto r = m.create(create_body());
   EXPECT_EQ(r.at("id").get<std::string>().size(), 16u);
   EXPECT_EQ(r.at("mode"), "assistant-drives");
   EXPECT_EQ(r.at("n_steps"), 2016);
   EXPECT_EQ(r.at("observation").at("alpha"), 3.0);
   EXPECT_EQ(r.at("observation").at("lines").size(), 6u);
   EXPECT_EQ(m.size(), 1u);
   const auto ev = drain(m, r.at("id"));
   ASSERT_EQ(ev.size(), 1u);
   EXPECT_EQ(ev[0].seq, 1u);
   EXPECT_EQ(ev[0].type, "step");
}

TEST(Sessions, CreateRejectsBadRequests)
{
   SessionManager m;
   EXPECT_EQ(status_of([&] { m.create(create_body("random")); }), 400);
   EXPECT_EQ(status_of([&] { m.create({{"mode", "autopilot"}}); }), 400);
   EXPECT_EQ(status_of([&] { m.create({{"case", "nowhere"}}); }), 400);
   EXPECT_EQ(status_of([&] { m.create({{"seed", -3}}); }), 400);
   EXPECT_EQ(status_of([&] { m.create({{"scenario", {{"neither", 1}}}}); }), 400);
   EXPECT_EQ(m.size(), 0u);
}

TEST(Sessions, CapacityIsEnforced)
{
   ManagerOptions opt;
   opt.capacity = 2;
   SessionManager m(opt);
   m.create(create_body());
   m.create(create_body());
   EXPECT_EQ(status_of([&] { m.create(create_body()); }), 503);
}

TEST(Sessions, UnknownSessionIs404)
{
   SessionManager m;
   EXPECT_EQ(status_of([&] { m.observation("nope"); }), 404);
   EXPECT_EQ(status_of([&] { m.step("nope", json::object()); }), 404);
   EXPECT_EQ(status_of([&] { m.remove("nope"); }), 404);
}

TEST(Sessions, IllegalHumanActionIsFlagged)
{
   SessionManager m;
   const std::string id = m.create(create_body())["id"];
   const auto r = m.step(id, {{"source", "human"}, {"action", "bus line_or:L3=2; bus line_ex:L5=2"}});
   EXPECT_TRUE(r.at("illegal").get<bool>());
   EXPECT_EQ(r.at("applied"), "noop");
   ASSERT_FALSE(r.at("illegal_reasons").empty());
   EXPECT_NE(r.at("illegal_reasons")[0].get<std::string>().find("max 1 substation"), std::string::npos);
   EXPECT_EQ(status_of([&] { m.step(id, {{"source", "human"}, {"action", "bus nowhere=1"}}); }), 400);
   EXPECT_EQ(status_of([&] { m.step(id, {{"source", "robot"}}); }), 400);
}

TEST(Sessions, HumanAlarmSpendsBudget)
{
   SessionManager m;
   const std::string id = m.create(create_body())["id"];
   const auto r = m.step(id, {{"source", "human"}, {"alarm", {1}}});
   EXPECT_TRUE(r.at("alarm_accepted").get<bool>());
   EXPECT_DOUBLE_EQ(r.at("observation").at("alpha").get<double>(), 2.0);
   const auto ev = drain(m, id);
   ASSERT_EQ(ev.size(), 3u);
   EXPECT_EQ(ev[1].type, "alarm");
   EXPECT_EQ(ev[1].payload.at("zones"), json({1}));
   EXPECT_EQ(ev[2].type, "step");
}

TEST(Sessions, SuggestionIsPure)
{
   SessionManager m;
   const std::string id = m.create(create_body("sie+rba2"))["id"];
   m.step(id, {{"source", "human"}, {"action", "line L3=off"}});
   const auto before = m.state_hash(id);
   const auto a = m.suggestion(id);
   const auto b = m.suggestion(id);
   EXPECT_EQ(a, b);
   EXPECT_EQ(m.state_hash(id), before);
   EXPECT_EQ(drain(m, id).size(), 2u);
   EXPECT_TRUE(a.contains("predicted_max_rho"));
}

TEST(Sessions, IdempotentSteps)
{
   SessionManager m;
   const std::string id = m.create(create_body())["id"];
   const json req{{"source", "human"}, {"action", "line L1=off"}, {"idempotency_key", "k1"}};
   const auto first = m.step(id, req);
   const auto hash = m.state_hash(id);
   const auto again = m.step(id, req);
   EXPECT_EQ(first, again);
   EXPECT_EQ(m.state_hash(id), hash);
   EXPECT_EQ(m.observation(id).at("step"), 1);
   m.step(id, {{"source", "human"}, {"idempotency_key", "k2"}});
   EXPECT_EQ(m.observation(id).at("step"), 2);
}

TEST(Sessions, AcceptAssistantMatchesTheAgent)
{
   SessionManager m;
   const std::string id = m.create(create_body("sie+rba1", 4))["id"];
   for(int i = 0; i < 50; ++i)
      m.step(id, {{"source", "accept-assistant"}});

   const auto& c = fixtures::toy5();
   Environment env(
      fixtures::share(c),
      std::make_shared<const Scenario>(load_scenario(c, fixtures::data_path("scenarios/toy5_week_flat"))));
   env.reset(4);
   auto agent = make_agent("sie+rba1", c);
   for(int i = 0; i < 50; ++i) {
      const auto d = agent.decide(env);
      env.step(d.action, d.alarm);
   }
   EXPECT_EQ(m.state_hash(id), env.state_hash());
}

TEST(Sessions, ConcurrentStepsKeepEventsGapless)
{
   SessionManager m;
   std::vector<std::string> ids;
   for(int i = 0; i < 3; ++i)
      ids.push_back(m.create(create_body("dn+rba2", i))["id"]);
   std::vector<std::thread> pool;
   for(int t = 0; t < 6; ++t)
      pool.emplace_back([&, t] {
         const auto& id = ids[t % 3];
         for(int k = 0; k < 20; ++k)
            m.step(id, {{"source", "human"}, {"idempotency_key", std::to_string(t) + ":" + std::to_string(k)}});
      });
   for(auto& th : pool)
      th.join();
   for(const auto& id : ids) {
      EXPECT_EQ(m.observation(id).at("step"), 40);
      const auto ev = drain(m, id);
      std::set<int> steps;
      for(std::size_t i = 0; i < ev.size(); ++i) {
         ASSERT_EQ(ev[i].seq, i + 1);
         if(ev[i].type == "step")
            steps.insert(ev[i].payload.at("observation").at("step").get<int>());
      }
      EXPECT_EQ(steps.size(), 41u);
   }
}

TEST(Sessions, GameOverClosesTheStream)
{
   TempDir tmp;
   ManagerOptions opt;
   opt.log_dir = tmp.path() / "logs";
   SessionManager m(opt);
   const std::string id = m.create({{"case", spur_case(tmp).string()}, {"seed", 2}, {"assistant", "do-nothing"}})["id"];
   json last;
   for(int i = 0; i < 2015; ++i) {
      last = m.step(id, {{"source", "human"}});
      if(last.at("done").get<bool>())
         break;
   }
   ASSERT_TRUE(last.contains("gameover"));
   EXPECT_EQ(last.at("gameover").at("outcome"), "failed");
   EXPECT_EQ(last.at("gameover").at("cause"), "islanded_load");
   EXPECT_EQ(last.at("gameover").at("failure_zone"), 2);
   EXPECT_EQ(status_of([&] { m.step(id, {{"source", "human"}}); }), 409);

   bool closed = false;
   const auto ev = m.events(id, 0, std::chrono::milliseconds(0), closed);
   EXPECT_TRUE(closed);
   EXPECT_EQ(ev.back().type, "gameover");
   const auto log = read_log(tmp.path() / "logs" / (id + ".jsonl"));
   EXPECT_TRUE(replay(log).ok);
}

TEST(Sessions, IdleSessionsExpire)
{
   ManagerOptions opt;
   opt.idle_timeout = std::chrono::milliseconds(0);
   SessionManager m(opt);
   const std::string id = m.create(create_body())["id"];
   std::this_thread::sleep_for(std::chrono::milliseconds(2));
   m.sweep();
   EXPECT_EQ(m.size(), 0u);
   EXPECT_EQ(status_of([&] { m.observation(id); }), 404);
}

TEST(Sessions, RouteParsing)
{
   auto r = parse_route("/sessions/abc/events?from=5");
   ASSERT_TRUE(r);
   EXPECT_EQ(r->id, "abc");
   EXPECT_EQ(r->tail, "events");
   EXPECT_EQ(query_u64(r->query, "from"), 5u);
   EXPECT_TRUE(parse_route("/sessions")->sessions_root);
   EXPECT_FALSE(parse_route("/other"));
   EXPECT_FALSE(parse_route("/sessions/a/b/c"));
}

// ---------------------------------------------------------------------------
// HTTP and WebSocket
// ---------------------------------------------------------------------------
class ServerTest : public ::testing::Test {
  protected:
   void SetUp() override
   {
      server_ = std::make_unique<Server>(manager_, "127.0.0.1", 0);
      server_->start();
      port_ = server_->port();
   }
   void TearDown() override { server_->stop(); }

   SessionManager manager_;
   std::unique_ptr<Server> server_;
   unsigned short port_ = 0;
};

TEST_F(ServerTest, HttpLifecycle)
{
   EXPECT_EQ(request(port_, http::verb::get, "/health").status, 200);
   auto r = request(port_, http::verb::post, "/sessions", create_body().dump());
   ASSERT_EQ(r.status, 200);
   const std::string id = r.body.at("id");

   r = request(port_, http::verb::get, "/sessions/" + id + "/observation");
   EXPECT_EQ(r.status, 200);
   EXPECT_EQ(r.body.at("step"), 0);
   EXPECT_FALSE(r.body.at("done").get<bool>());

   r = request(port_, http::verb::get, "/sessions/" + id + "/suggestion");
   EXPECT_EQ(r.status, 200);
   EXPECT_EQ(r.body.at("action"), "noop");

   r = request(port_, http::verb::post, "/sessions/" + id + "/step", R"({"source":"human","alarm":[0]})");
   EXPECT_EQ(r.status, 200);
   EXPECT_DOUBLE_EQ(r.body.at("observation").at("alpha").get<double>(), 2.0);

   EXPECT_EQ(request(port_, http::verb::delete_, "/sessions/" + id).status, 200);
   EXPECT_EQ(request(port_, http::verb::get, "/sessions/" + id + "/observation").status, 404);
}

TEST_F(ServerTest, HttpErrors)
{
   EXPECT_EQ(request(port_, http::verb::post, "/sessions", create_body("random").dump()).status, 400);
   EXPECT_EQ(request(port_, http::verb::post, "/sessions", "{oops").status, 400);
   EXPECT_EQ(request(port_, http::verb::get, "/nowhere").status, 404);
   EXPECT_EQ(request(port_, http::verb::put, "/sessions").status, 405);
   EXPECT_EQ(request(port_, http::verb::options, "/sessions").status, 204);
   const std::string id = request(port_, http::verb::post, "/sessions", "").body.at("id");
   EXPECT_EQ(request(port_, http::verb::get, "/sessions/" + id + "/events").status, 426);
}

TEST_F(ServerTest, WebSocketStreamsEventsInOrder)
{
   const std::string id = request(port_, http::verb::post, "/sessions", create_body().dump()).body.at("id");
   for(int i = 0; i < 3; ++i)
      request(port_, http::verb::post, "/sessions/" + id + "/step", R"({"source":"human"})");

   asio::io_context ioc;
   websocket::stream<tcp::socket> ws(ioc);
   ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), port_});
   ws.handshake("127.0.0.1", "/sessions/" + id + "/events?from=1");
   std::vector<json> got;
   for(int i = 0; i < 3; ++i) {
      beast::flat_buffer buf;
      ws.read(buf);
      got.push_back(json::parse(beast::buffers_to_string(buf.data())));
   }
   EXPECT_EQ(got[0].at("seq"), 2);
   EXPECT_EQ(got[2].at("seq"), 4);
   EXPECT_EQ(got[2].at("payload").at("observation").at("step"), 3);

   request(port_, http::verb::post, "/sessions/" + id + "/step", R"({"source":"human"})");
   beast::flat_buffer buf;
   ws.read(buf);
   EXPECT_EQ(json::parse(beast::buffers_to_string(buf.data())).at("seq"), 5);

   request(port_, http::verb::delete_, "/sessions/" + id);
   beast::error_code ec;
   beast::flat_buffer rest;
   ws.read(rest, ec);
   EXPECT_EQ(ec, websocket::error::closed);
   EXPECT_EQ(ws.reason().code, websocket::close_code::normal);
}

TEST_F(ServerTest, WebSocketUnknownSessionIsClosed)
{
   asio::io_context ioc;
   websocket::stream<tcp::socket> ws(ioc);
   ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), port_});
   ws.handshake("127.0.0.1", "/sessions/missing/events");
   beast::flat_buffer buf;
   beast::error_code ec;
   ws.read(buf, ec);
   EXPECT_EQ(ec, websocket::error::closed);
   EXPECT_EQ(ws.reason().code, websocket::close_code::policy_error);
}

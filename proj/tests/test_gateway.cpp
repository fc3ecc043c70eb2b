#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "earco/error.hpp"
#include "earco/gateway.hpp"
#include "earco/http.hpp"
#include "earco/parallel.hpp"
#include "test_support.hpp"

using namespace earco;
using testing_support::mock;
using testing_support::quiet_gateway;

namespace {

ChatRequest user_request(const std::string& text, ModelRole role = ModelRole::kGenerator) {
  return ChatRequest::for_role(role, {{MessageRole::kUser, text}});
}

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no earco::Error thrown";
  return ErrorCode::kParse;
}

/// Local chat endpoint answering with a scripted list of HTTP statuses.
class ScriptedServer {
 public:
  explicit ScriptedServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto i = hits_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = statuses_[std::min<std::size_t>(i, statuses_.size() - 1)];
      res.status = status;
      if (status == 200) {
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Cert expired"}}],)"
                        R"("usage":{"prompt_tokens":12,"completion_tokens":2}})",
                        "application/json");
      } else {
        res.set_content("boom", "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::size_t hits() const { return hits_.load(); }
  std::string last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  std::vector<int> statuses_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<std::size_t> hits_{0};
  std::string last_body_;
  std::string last_auth_;
};

}  // namespace

TEST(ChatRequest, RoleDefaults) {
  const auto g = user_request("x");
  EXPECT_EQ(g.temperature, 0.0);
  EXPECT_EQ(g.max_new_tokens, 200);
  EXPECT_EQ(user_request("x", ModelRole::kOptimizer).max_new_tokens, 1024);
}

TEST(ChatRequest, Validation) {
  ChatRequest r;
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::kPrecondition);
  r.messages = {{MessageRole::kAssistant, "hi"}};
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::kPrecondition);
  r.messages = {{MessageRole::kUser, "hi"}};
  r.temperature = -0.1;
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::kPrecondition);
  r.temperature = 0.0;
  r.max_new_tokens = 0;
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::kPrecondition);
  r.max_new_tokens = 1;
  EXPECT_NO_THROW(r.validate());
}

TEST(ChatRequest, Flatten) {
  auto r = ChatRequest::for_role(ModelRole::kJudge, {{MessageRole::kSystem, "s"}, {MessageRole::kUser, "u"}});
  EXPECT_EQ(r.flatten(), "judge\nsystem: s\nuser: u\n");
}

TEST(MockBackend, FirstMatchingRuleWins) {
  auto g = quiet_gateway();
  g->set_all_backends(mock(R"([
    {"match": "root cause", "response": "Cert expired"},
    {"match": "root", "response": "never"},
    {"role": "judge", "response": "Score: 4"}
  ])"));
  EXPECT_EQ(g->complete(user_request("what is the root cause?")).content, "Cert expired");
  EXPECT_EQ(g->complete(user_request("anything", ModelRole::kJudge)).content, "Score: 4");
  EXPECT_EQ(code_of([&] { g->complete(user_request("other")); }), ErrorCode::kUnmatchedRequest);
}

TEST(MockBackend, AllSubstringsSequencesRegexAndDefault) {
  auto b = mock(R"js({"default_response": "fallback", "rules": [
    {"match": ["alpha", "beta"], "responses": ["one", "two"]},
    {"regex": "id=(\\d+)", "response": "got $1 ($&) $$"}
  ]})js");
  EXPECT_EQ(b->complete(user_request("alpha only")).content, "fallback");
  EXPECT_EQ(b->complete(user_request("beta alpha")).content, "one");
  EXPECT_EQ(b->complete(user_request("beta alpha")).content, "two");
  EXPECT_EQ(b->complete(user_request("beta alpha")).content, "two");
  EXPECT_EQ(b->complete(user_request("x id=42 y")).content, "got 42 (id=42) $");
  EXPECT_EQ(b->calls(), 5u);
}

TEST(MockBackend, ScriptErrors) {
  EXPECT_EQ(code_of([] { MockScript::from_json_text("{"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { MockScript::from_json_text(R"([{"match": "x"}])"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { MockScript::from_json_text(R"([{"role": "boss", "response": "x"}])"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { MockBackend(MockScript::from_json_text(R"([{"regex": "(", "response": "x"}])")); }),
            ErrorCode::kParse);
}

TEST(CacheKey, SensitiveToEveryField) {
  const auto a = user_request("db timeout");
  EXPECT_EQ(cache_key(a), cache_key(user_request("db timeout")));
  EXPECT_NE(cache_key(a), cache_key(user_request("db timeouT")));
  auto warm = a;
  warm.temperature = 0.7;
  EXPECT_NE(cache_key(a), cache_key(warm));
  auto longer = a;
  longer.max_new_tokens = 201;
  EXPECT_NE(cache_key(a), cache_key(longer));
  EXPECT_NE(cache_key(a), cache_key(user_request("db timeout", ModelRole::kJudge)));
  EXPECT_EQ(cache_key(a).size(), 64u);
}

TEST(Gateway, CacheServesSecondIdenticalRequest) {
  GatewayOptions opts;
  opts.cache_enabled = true;
  Gateway g(opts);
  auto b = mock(R"([{"responses": ["first", "second"]}])");
  g.set_all_backends(b);
  EXPECT_EQ(g.complete(user_request("q")).content, "first");
  EXPECT_EQ(g.complete(user_request("q")).content, "first");
  EXPECT_EQ(b->calls(), 1u);
  EXPECT_EQ(g.cache_hits(), 1u);
  EXPECT_EQ(g.requests(ModelRole::kGenerator), 2u);
  EXPECT_EQ(g.backend_calls(ModelRole::kGenerator), 1u);
  EXPECT_EQ(g.network_calls(), 0u);
}

TEST(Gateway, PersistentCacheSurvivesRestart) {
  testing_support::TempDir dir("cache");
  GatewayOptions opts;
  opts.cache_dir = dir.path();
  {
    Gateway g(opts);
    g.set_all_backends(mock(R"([{"response": "stored"}])"));
    EXPECT_EQ(g.complete(user_request("q")).content, "stored");
  }
  Gateway g(opts);
  auto b = mock(R"([{"response": "fresh"}])");
  g.set_all_backends(b);
  EXPECT_EQ(g.complete(user_request("q")).content, "stored");
  EXPECT_EQ(b->calls(), 0u);
}

TEST(Gateway, MissingBackendIsConfigError) {
  Gateway g;
  EXPECT_EQ(code_of([&] { g.complete(user_request("q")); }), ErrorCode::kConfig);
}

TEST(Gateway, CountsPerRoleUnderConcurrency) {
  auto g = quiet_gateway();
  g->set_all_backends(mock(R"([{"response": "ok"}])"));
  parallel_for(200, 8, [&](std::size_t i) {
    g->complete(user_request("q" + std::to_string(i), i % 2 == 0 ? ModelRole::kJudge : ModelRole::kOptimizer));
  });
  EXPECT_EQ(g->requests(ModelRole::kJudge), 100u);
  EXPECT_EQ(g->requests(ModelRole::kOptimizer), 100u);
  EXPECT_EQ(g->requests(ModelRole::kGenerator), 0u);
}

TEST(ParallelFor, OrderedSlotsAndLowestIndexError) {
  std::vector<int> out(100);
  parallel_for(out.size(), 7, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 13 || i == 40) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 13");
  }
}

TEST(Http, ParseUrl) {
  const auto u = parse_url("https://api.example.com/v1/chat/completions");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "api.example.com");
  EXPECT_EQ(u.port, 443);
  EXPECT_EQ(u.path, "/v1/chat/completions");
  EXPECT_EQ(parse_url("http://h:8080").port, 8080);
  EXPECT_EQ(code_of([] { parse_url("ftp://x/y"); }), ErrorCode::kConfig);
}

TEST(HttpChatBackend, BodyAndResponseParsing) {
  HttpChatBackend b("http://127.0.0.1:9/v1/chat/completions", "k", "gpt-x");
  auto r = ChatRequest::for_role(ModelRole::kGenerator, {{MessageRole::kSystem, "s"}, {MessageRole::kUser, "u"}});
  const auto body = nlohmann::json::parse(b.request_body(r));
  EXPECT_EQ(body["model"], "gpt-x");
  EXPECT_EQ(body["max_tokens"], 200);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "u");
  EXPECT_EQ(b.parse_response_body(R"({"choices":[{"message":{"content":"x"}}]})").content, "x");
  EXPECT_EQ(code_of([&] { b.parse_response_body("{}"); }), ErrorCode::kProtocol);
  EXPECT_EQ(code_of([&] { b.parse_response_body("<html>"); }), ErrorCode::kProtocol);
}

TEST(HttpChatBackend, SuccessAgainstLocalServer) {
  ScriptedServer server({200});
  auto g = quiet_gateway();
  g->set_all_backends(std::make_shared<HttpChatBackend>(server.url(), "secret", "m"));
  const auto r = g->complete(user_request("hello"));
  EXPECT_EQ(r.content, "Cert expired");
  EXPECT_EQ(r.usage.prompt_tokens, 12u);
  EXPECT_EQ(server.last_auth(), "Bearer secret");
  EXPECT_NE(server.last_body().find("hello"), std::string::npos);
  EXPECT_EQ(g->network_calls(), 1u);
}

TEST(HttpChatBackend, ThreeServerErrorsExhaustRetries) {
  ScriptedServer server({500, 500, 500, 200});
  Gateway g;
  std::vector<long long> sleeps;
  g.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  g.set_all_backends(std::make_shared<HttpChatBackend>(server.url(), "", ""));
  EXPECT_EQ(code_of([&] { g.complete(user_request("q")); }), ErrorCode::kTransport);
  EXPECT_EQ(server.hits(), 3u);
  EXPECT_EQ(g.backend_calls(ModelRole::kGenerator), 3u);
  EXPECT_EQ(g.network_calls(), 3u);
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000}));
}

TEST(HttpChatBackend, RecoversAfterTransientErrors) {
  ScriptedServer server({503, 429, 200});
  auto g = quiet_gateway();
  g->set_all_backends(std::make_shared<HttpChatBackend>(server.url(), "", ""));
  EXPECT_EQ(g->complete(user_request("q")).content, "Cert expired");
  EXPECT_EQ(server.hits(), 3u);
}

TEST(HttpChatBackend, ClientErrorIsNotRetried) {
  ScriptedServer server({404});
  auto g = quiet_gateway();
  g->set_all_backends(std::make_shared<HttpChatBackend>(server.url(), "", ""));
  try {
    g->complete(user_request("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRemote);
    EXPECT_EQ(e.status(), 404);
  }
  EXPECT_EQ(server.hits(), 1u);
}

TEST(HttpChatBackend, RefusedConnectionIsTransport) {
  // Bind then release a port so nothing listens on it.
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto g = quiet_gateway();
  g->set_all_backends(std::make_shared<HttpChatBackend>("http://127.0.0.1:" + std::to_string(port) + "/x", "", "", 2));
  EXPECT_EQ(code_of([&] { g->complete(user_request("q")); }), ErrorCode::kTransport);
  EXPECT_EQ(g->network_calls(), 3u);
}

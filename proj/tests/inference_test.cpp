#include "gsmr/inference.hpp"

#include <gtest/gtest.h>
#include <stdlib.h>

#include <fstream>
#include <set>

#include "test_support.hpp"

namespace gsmr {
namespace {

using namespace std::chrono_literals;

TEST(BuildPrompt, ExactText) {
  EXPECT_EQ(build_prompt("What is 2 + 3?"),
            "As an expert problem solver, solve the following mathematical question step by step.\n"
            "Q: What is 2 + 3?\nA: Let's think step by step.");
  EXPECT_THROW(build_prompt(""), std::invalid_argument);
}

TEST(BuildPrompt, JudyLevelSixQuestionAppearsOnce) {
  const auto& judy = testing::corpus_template("judy");
  auto q = render_question(judy, testing::ints({3124213, 7832129, 25, 35, 1}));
  auto p = build_prompt(q);
  EXPECT_TRUE(p.ends_with("A: Let's think step by step."));
  auto at = p.find(q);
  ASSERT_NE(at, std::string::npos);
  EXPECT_EQ(p.find(q, at + 1), std::string::npos);
}

TEST(SamplingParams, Presets) {
  auto g = SamplingParams::greedy();
  EXPECT_EQ(g.temperature, 0.0);
  EXPECT_EQ(g.n_passes, 1);
  auto r = SamplingParams::recall(48);
  EXPECT_EQ(r.temperature, 0.8);
  EXPECT_EQ(r.top_p, 0.95);
  EXPECT_EQ(r.n_passes, 48);
  EXPECT_THROW((SamplingParams{0, 0, 10, 1}.check()), std::invalid_argument);
  EXPECT_THROW((SamplingParams{0, 1, 10, 0}.check()), std::invalid_argument);
}

TEST(ChatBody, ReadsContentAndUsage) {
  auto r = parse_chat_body(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"completion_tokens":12}})");
  EXPECT_EQ(r.content, "hi");
  EXPECT_EQ(r.completion_tokens, 12u);
  auto no_usage = parse_chat_body(R"({"choices":[{"message":{"content":"x"}}]})");
  EXPECT_FALSE(no_usage.completion_tokens);
  EXPECT_ANY_THROW(parse_chat_body(R"({"choices":[]})"));
}

// Local chat-completions server whose behaviour is scripted per hit.
class FakeServer {
 public:
  using Script = std::function<void(int hit, const httplib::Request&, httplib::Response&)>;
  explicit FakeServer(Script script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int hit = ++hits_;
      {
        std::lock_guard lock(m_);
        last_body_ = req.body;
        last_auth_ = req.get_header_value("Authorization");
      }
      script_(hit, req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int hits() const { return hits_; }
  std::string last_body() {
    std::lock_guard lock(m_);
    return last_body_;
  }
  std::string last_auth() {
    std::lock_guard lock(m_);
    return last_auth_;
  }

 private:
  Script script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::mutex m_;
  std::string last_body_, last_auth_;
};

void reply_ok(httplib::Response& res, const std::string& content, int tokens = 7) {
  nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                   {"usage", {{"completion_tokens", tokens}}}};
  res.set_content(j.dump(), "application/json");
}

ModelEndpoint endpoint_for(const FakeServer& s, int retries = 3) {
  return ModelEndpoint{s.url(), "fake-model", "", 5.0, retries};
}

BackoffPolicy fast{1ms, 5ms};

ChatRequest simple_request() { return {"fake-model", {{"user", "hello"}}, 0.0, 1.0, 64}; }

TEST(HttpChatModel, SendsWireFieldsAndBearerKey) {
  FakeServer s([](int, const httplib::Request&, httplib::Response& res) { reply_ok(res, "answer 5"); });
  ::setenv("GSMR_TEST_KEY", "sk-test", 1);
  auto ep = endpoint_for(s);
  ep.api_key_env = "GSMR_TEST_KEY";
  HttpChatModel m(ep, fast);
  auto r = m.complete(simple_request());
  EXPECT_EQ(r.content, "answer 5");
  EXPECT_EQ(r.completion_tokens, 7u);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_EQ(s.last_auth(), "Bearer sk-test");
  auto body = nlohmann::json::parse(s.last_body());
  EXPECT_EQ(body["model"], "fake-model");
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["top_p"], 1.0);
  EXPECT_EQ(body["max_tokens"], 64);
  EXPECT_FALSE(body.contains("seed"));
  EXPECT_EQ(m.fingerprint().find("sk-test"), std::string::npos);
}

TEST(HttpChatModel, MissingKeyVariableIsAuthError) {
  FakeServer s([](int, const httplib::Request&, httplib::Response& res) { reply_ok(res, "x"); });
  ::unsetenv("GSMR_TEST_ABSENT_KEY");
  auto ep = endpoint_for(s);
  ep.api_key_env = "GSMR_TEST_ABSENT_KEY";
  HttpChatModel m(ep, fast);
  EXPECT_THROW(m.complete(simple_request()), AuthError);
  EXPECT_EQ(s.hits(), 0);
}

TEST(HttpChatModel, RetriesTransientFailures) {
  FakeServer s([](int hit, const httplib::Request&, httplib::Response& res) {
    if (hit <= 2) res.status = hit == 1 ? 503 : 429;
    else reply_ok(res, "third time");
  });
  HttpChatModel m(endpoint_for(s), fast);
  auto r = m.complete(simple_request());
  EXPECT_EQ(r.content, "third time");
  EXPECT_EQ(r.attempts, 3);
}

TEST(HttpChatModel, HonoursRetryAfter) {
  FakeServer s([](int hit, const httplib::Request&, httplib::Response& res) {
    if (hit == 1) {
      res.status = 429;
      res.set_header("Retry-After", "1");
    } else {
      reply_ok(res, "ok");
    }
  });
  HttpChatModel m(endpoint_for(s), fast);
  auto start = std::chrono::steady_clock::now();
  m.complete(simple_request());
  EXPECT_GE(std::chrono::steady_clock::now() - start, 950ms);
}

TEST(HttpChatModel, UnauthorizedFailsFast) {
  FakeServer s([](int, const httplib::Request&, httplib::Response& res) { res.status = 401; });
  HttpChatModel m(endpoint_for(s, 5), fast);
  EXPECT_THROW(m.complete(simple_request()), AuthError);
  EXPECT_EQ(s.hits(), 1);
}

TEST(HttpChatModel, ExhaustedServerErrorsAreRequestFailures) {
  FakeServer s([](int, const httplib::Request&, httplib::Response& res) { res.status = 500; });
  HttpChatModel m(endpoint_for(s, 2), fast);
  try {
    m.complete(simple_request());
    FAIL();
  } catch (const RequestFailed& e) {
    EXPECT_EQ(e.attempts, 3);
  }
  EXPECT_EQ(s.hits(), 3);
}

TEST(HttpChatModel, BadRequestIsNotRetried) {
  FakeServer s([](int, const httplib::Request&, httplib::Response& res) { res.status = 400; });
  HttpChatModel m(endpoint_for(s, 4), fast);
  EXPECT_THROW(m.complete(simple_request()), RequestFailed);
  EXPECT_EQ(s.hits(), 1);
}

TEST(HttpChatModel, UnreachableEndpoint) {
  std::string url;
  {
    FakeServer s([](int, const httplib::Request&, httplib::Response&) {});
    url = s.url();
  }
  HttpChatModel m(ModelEndpoint{url, "m", "", 1.0, 1}, fast);
  EXPECT_THROW(m.complete(simple_request()), EndpointUnavailable);
}

std::vector<GeneratedProblem> toy_dataset(std::size_t n) {
  std::vector<GeneratedProblem> ds;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratedProblem p;
    p.template_id = "toy";
    p.level = Level::L2;
    p.variant_index = i;
    p.question_text = "What is " + std::to_string(i) + " + 1?";
    p.ground_truth = Integer(i + 1);
    ds.push_back(p);
  }
  return ds;
}

// Echoes the question; optionally fails selected requests.
class ScriptedModel : public ChatModel {
 public:
  std::function<void(const ChatRequest&)> before;
  std::atomic<int> calls{0};
  ChatResponse complete(const ChatRequest& r) override {
    ++calls;
    if (before) before(r);
    ChatResponse out;
    out.content = "reply to " + r.messages.at(0).content.substr(90, 20) + " seed " +
                  (r.seed ? std::to_string(*r.seed) : std::string("none"));
    out.completion_tokens = 10;
    return out;
  }
  std::string model_name() const override { return "scripted"; }
  std::string fingerprint() const override { return "scripted@test"; }
};

TEST(RunBatch, OneRecordPerPassAndResume) {
  auto dir = testing::scratch_dir("batch");
  auto ds = toy_dataset(10);
  ScriptedModel m;
  auto store = dir / "scripted.jsonl";
  auto s1 = run_batch(ds, m, SamplingParams::recall(3), store, {.concurrency = 4});
  EXPECT_EQ(s1.requested, 30u);
  EXPECT_EQ(s1.fetched, 30u);
  auto recs = load_inference(store);
  ASSERT_EQ(recs.size(), 30u);
  for (const auto& [k, r] : recs) {
    EXPECT_TRUE(r.ok);
    const auto* p = &ds.at(std::stoul(k.first.substr(k.first.rfind('/') + 1)));
    EXPECT_EQ(r.prompt, build_prompt(p->question_text));
    EXPECT_NE(r.response.find("seed " + std::to_string(k.second)), std::string::npos);
  }
  auto s2 = run_batch(ds, m, SamplingParams::recall(3), store);
  EXPECT_EQ(s2.fetched, 0u);
  EXPECT_EQ(s2.already_done, 30u);
  EXPECT_EQ(m.calls, 30);
}

TEST(RunBatch, FailedRecordsAreKeptAndRetried) {
  auto dir = testing::scratch_dir("batch_fail");
  auto ds = toy_dataset(6);
  ScriptedModel m;
  m.before = [](const ChatRequest& r) {
    if (r.messages[0].content.find("What is 3 ") != std::string::npos) throw RequestFailed("HTTP 500", 6);
  };
  auto store = dir / "s.jsonl";
  auto s1 = run_batch(ds, m, SamplingParams::greedy(), store);
  EXPECT_EQ(s1.failed, 1u);
  auto recs = load_inference(store);
  ASSERT_EQ(recs.size(), 6u);
  EXPECT_FALSE(recs.at({"toy/L2/3", 0}).ok);
  EXPECT_EQ(recs.at({"toy/L2/3", 0}).error, "HTTP 500");
  m.before = nullptr;
  auto s2 = run_batch(ds, m, SamplingParams::greedy(), store);
  EXPECT_EQ(s2.fetched, 1u);
  recs = load_inference(store);
  EXPECT_TRUE(recs.at({"toy/L2/3", 0}).ok);
}

TEST(RunBatch, UnavailableEndpointStopsAndResumes) {
  auto dir = testing::scratch_dir("batch_down");
  auto ds = toy_dataset(20);
  ScriptedModel m;
  std::atomic<int> n{0};
  m.before = [&](const ChatRequest&) {
    if (++n > 5) throw EndpointUnavailable("down");
  };
  auto store = dir / "s.jsonl";
  EXPECT_THROW(run_batch(ds, m, SamplingParams::greedy(), store, {.concurrency = 1}), EndpointUnavailable);
  EXPECT_EQ(load_inference(store).size(), 5u);
  m.before = nullptr;
  auto s = run_batch(ds, m, SamplingParams::greedy(), store);
  EXPECT_EQ(s.already_done, 5u);
  EXPECT_EQ(s.fetched, 15u);
  EXPECT_EQ(load_inference(store).size(), 20u);
}

TEST(RunBatch, AuthErrorPropagates) {
  auto dir = testing::scratch_dir("batch_auth");
  ScriptedModel m;
  m.before = [](const ChatRequest&) { throw AuthError("401"); };
  EXPECT_THROW(run_batch(toy_dataset(3), m, SamplingParams::greedy(), dir / "s.jsonl"), AuthError);
}

TEST(Store, TruncatedTailIsSkippedAndRepaired) {
  auto dir = testing::scratch_dir("store");
  auto path = dir / "s.jsonl";
  {
    JsonlAppender a(path);
    a.append({{"k", 1}});
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"k": 2, "trunc)";
  }
  auto c = read_jsonl(path);
  EXPECT_EQ(c.records.size(), 1u);
  EXPECT_EQ(c.malformed_lines, 1u);
  {
    JsonlAppender a(path);
    a.append({{"k", 3}});
  }
  c = read_jsonl(path);
  ASSERT_EQ(c.records.size(), 2u);
  EXPECT_EQ(c.records[1]["k"], 3);
}

TEST(Store, ConcurrentAppendsStayWholeLines) {
  auto dir = testing::scratch_dir("store_mt");
  auto path = dir / "s.jsonl";
  {
    JsonlAppender a(path);
    std::vector<std::jthread> ts;
    for (int t = 0; t < 8; ++t)
      ts.emplace_back([&, t] {
        for (int i = 0; i < 200; ++i) a.append({{"t", t}, {"i", i}, {"pad", std::string(300, 'x')}});
      });
  }
  auto c = read_jsonl(path);
  EXPECT_EQ(c.records.size(), 1600u);
  EXPECT_EQ(c.malformed_lines, 0u);
}

}  // namespace
}  // namespace gsmr

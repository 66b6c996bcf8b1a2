#include <gtest/gtest.h>

#include <thread>

#include "test_support.hpp"

using namespace mavqa;

namespace {

// Fails the first `failures` sends with a transient error, then delegates.
class FlakyTransport : public ChatTransport {
public:
    FlakyTransport(std::shared_ptr<ChatTransport> inner, int failures)
        : inner_(std::move(inner)), remaining_(failures) {}

    ChatResponse send(const BackendSpec& spec, const std::vector<ChatMessage>& messages) override {
        attempts_.fetch_add(1);
        if (remaining_.fetch_sub(1) > 0) throw TransportError("synthetic outage");
        return inner_->send(spec, messages);
    }

    int attempts() const { return attempts_.load(); }

private:
    std::shared_ptr<ChatTransport> inner_;
    std::atomic<int> remaining_;
    std::atomic<int> attempts_{0};
};

class PermanentFailTransport : public ChatTransport {
public:
    ChatResponse send(const BackendSpec&, const std::vector<ChatMessage>&) override {
        attempts_.fetch_add(1);
        throw PermanentBackendError("HTTP 401: bad credentials");
    }
    int attempts() const { return attempts_.load(); }

private:
    std::atomic<int> attempts_{0};
};

TEST(ChatMessage, ValidationRules) {
    EXPECT_THROW(validate_messages({}), PreconditionError);
    EXPECT_THROW(validate_messages({{Role::Assistant, "x", {{"img.jpg"}}}}), PreconditionError);
    EXPECT_THROW(validate_messages({{Role::User, "", {}}}), PreconditionError);
    EXPECT_NO_THROW(validate_messages({ChatMessage::user("", {{"img.jpg"}})}));
}

TEST(MockTransport, ScriptedReply) {
    MockTransport mock;
    auto messages = std::vector<ChatMessage>{ChatMessage::user("what is the answer?")};
    mock.add_script(messages, "Answer: 2");
    auto spec = testsupport::mock_spec("m");
    EXPECT_EQ(complete(mock, spec, messages).text, "Answer: 2");
}

TEST(MockTransport, EmptyMessageListIsPreconditionError) {
    MockTransport mock;
    auto spec = testsupport::mock_spec("m");
    EXPECT_THROW(complete(mock, spec, {}), PreconditionError);
    EXPECT_EQ(mock.calls(), 0u);
}

TEST(Complete, ImageToNonVisionBackendFailsBeforeTransport) {
    MockTransport mock;
    auto spec = testsupport::mock_spec("m", /*vision=*/false);
    auto messages = std::vector<ChatMessage>{ChatMessage::user("look", {{"img.jpg"}})};
    EXPECT_THROW(complete(mock, spec, messages), CapabilityError);
    EXPECT_EQ(mock.calls(), 0u) << "capability check must precede any transport call";
}

TEST(MockTransport, DeterministicAcrossIdenticalRequests) {
    MockTransport mock;
    auto messages = std::vector<ChatMessage>{ChatMessage::system("s"), ChatMessage::user("hello")};
    mock.add_script(messages, "reply text");
    auto spec = testsupport::mock_spec("m");
    auto a = complete(mock, spec, messages);
    auto b = complete(mock, spec, messages);
    EXPECT_EQ(a.text, b.text);
}

TEST(MockTransport, UnmatchedFallsBackAndLogs) {
    MockTransport mock;
    mock.set_fallback("UNKNOWN");
    auto spec = testsupport::mock_spec("m");
    auto r = complete(mock, spec, {ChatMessage::user("never scripted")});
    EXPECT_EQ(r.text, "UNKNOWN");
    ASSERT_EQ(mock.unmatched().size(), 1u);
    EXPECT_NE(mock.unmatched()[0].find("never scripted"), std::string::npos);
}

TEST(MockTransport, ConjunctiveRules) {
    MockTransport mock;
    mock.add_rule_all({"alpha", "beta"}, "both");
    mock.add_rule("alpha", "only alpha");
    mock.set_fallback("none");
    auto spec = testsupport::mock_spec("m");
    EXPECT_EQ(complete(mock, spec, {ChatMessage::user("alpha and beta here")}).text, "both");
    EXPECT_EQ(complete(mock, spec, {ChatMessage::user("alpha alone")}).text, "only alpha");
    EXPECT_EQ(complete(mock, spec, {ChatMessage::user("beta alone")}).text, "none");
}

TEST(MockTransport, PureFunctionOfRequestUnderConcurrency) {
    MockTransport mock;
    mock.add_rule("ping", "pong");
    auto spec = testsupport::mock_spec("m");
    std::vector<std::thread> pool;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 8; ++t) {
        pool.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                auto r = complete(mock, spec, {ChatMessage::user("ping number 7")});
                if (r.text != "pong") mismatches.fetch_add(1);
            }
        });
    }
    for (auto& t : pool) t.join();
    EXPECT_EQ(mismatches.load(), 0);
    EXPECT_EQ(mock.calls(), 400u);
}

TEST(Complete, RetriesTransientFailuresWithinBudget) {
    auto inner = std::make_shared<MockTransport>();
    inner->set_fallback("recovered");
    auto spec = testsupport::mock_spec("m");
    spec.max_retries = 3;

    FlakyTransport flaky(inner, /*failures=*/3);
    auto r = complete(flaky, spec, {ChatMessage::user("x")});
    EXPECT_EQ(r.text, "recovered");
    EXPECT_EQ(flaky.attempts(), 4);
}

TEST(Complete, ExhaustedRetriesYieldTransportError) {
    auto inner = std::make_shared<MockTransport>();
    auto spec = testsupport::mock_spec("m");
    spec.max_retries = 2;

    FlakyTransport flaky(inner, /*failures=*/3); // one more than the budget allows
    try {
        complete(flaky, spec, {ChatMessage::user("x")});
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_NE(std::string(e.what()).find("retries exhausted after 3 attempts"), std::string::npos);
    }
    EXPECT_EQ(flaky.attempts(), 3);
}

TEST(Complete, PermanentErrorsAreNeverRetried) {
    PermanentFailTransport transport;
    auto spec = testsupport::mock_spec("m");
    spec.max_retries = 5;
    EXPECT_THROW(complete(transport, spec, {ChatMessage::user("x")}), PermanentBackendError);
    EXPECT_EQ(transport.attempts(), 1);
}

TEST(Fingerprint, StableDigestOfRolesTextsAndImageCounts) {
    auto a = request_fingerprint({ChatMessage::user("hello")});
    auto b = request_fingerprint({ChatMessage::user("hello")});
    auto c = request_fingerprint({ChatMessage::system("hello")});
    auto d = request_fingerprint({ChatMessage::user("hello", {{"i.jpg"}})});
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_NE(a, d);
}

TEST(Gateway, ResolvesBackendsAndRejectsUnknown) {
    testsupport::TestWorld world;
    world.mock->set_fallback("ok");
    auto r = world.gateway.complete("gpt-4o", {ChatMessage::user("x")});
    EXPECT_EQ(r.text, "ok");
    EXPECT_THROW(world.gateway.complete("nope", {ChatMessage::user("x")}), ConfigError);
}

TEST(HttpTransport, RequestBodyShape) {
    BackendSpec spec = testsupport::mock_spec("svc");
    spec.model_name = "provider-model";
    spec.temperature = 0.0;
    spec.max_output_tokens = 64;
    auto body = HttpTransport::build_request_body(spec, {ChatMessage::system("sys"), ChatMessage::user("hi")});
    EXPECT_EQ(body.at("model"), "provider-model");
    EXPECT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(body.at("messages")[0].at("role"), "system");
    EXPECT_EQ(body.at("messages")[1].at("content"), "hi");
}

TEST(HttpTransport, ResponseBodyParsing) {
    auto r = HttpTransport::parse_response_body(
        R"({"choices":[{"message":{"content":"Answer: 1"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}})");
    EXPECT_EQ(r.text, "Answer: 1");
    ASSERT_TRUE(r.usage.has_value());
    EXPECT_EQ(r.usage->input_tokens, 10);
    EXPECT_EQ(r.usage->output_tokens, 3);
    EXPECT_THROW(HttpTransport::parse_response_body("not json"), TransportError);
    EXPECT_THROW(HttpTransport::parse_response_body(R"({"unexpected":true})"), TransportError);
}

} // namespace

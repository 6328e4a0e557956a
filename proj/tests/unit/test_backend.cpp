#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "leakprobe/backend.hpp"
#include "leakprobe/error.hpp"
#include "leakprobe/text.hpp"
#include "support/synthetic.hpp"

using namespace leakprobe;
using namespace leakprobe::backend;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

const synth::Corpus& sample() {
  static const synth::Corpus c = synth::make_corpus(10, 20, 4);
  return c;
}

}  // namespace

TEST(Mock, FullLeakReturnsVerbatimBodyWindows) {
  const auto d = mock_memorizing_backend(sample().records, 1.0, 9);
  const auto b = make_backend(d);
  GenerationConfig cfg;
  for (std::size_t i = 0; i < 25; ++i) {
    const auto out = b->complete("anything", cfg, i);
    EXPECT_EQ(out, sample().records[i % 10].body);
  }
  cfg.max_tokens = 5;
  for (std::size_t i = 0; i < 25; ++i) {
    const auto out = b->complete("", cfg, i);
    EXPECT_EQ(text::count_words(out), 5u);
    EXPECT_NE(sample().records[i % 10].body.find(out), std::string::npos);
  }
}

TEST(Mock, NoLeakReturnsFiller) {
  const auto b = make_backend(mock_memorizing_backend(sample().records, 0.0, 9));
  GenerationConfig cfg;
  EXPECT_EQ(b->complete("x", cfg, 3), std::string(kMockFiller));
  cfg.max_tokens = 3;
  EXPECT_EQ(b->complete("x", cfg, 3), "thanks for the");
}

TEST(Mock, LeakRateIsRoughlyHonouredAndDeterministic) {
  const auto d = mock_memorizing_backend(sample().records, 0.3, 5);
  std::size_t leaks = 0;
  for (std::size_t i = 0; i < 4000; ++i) leaks += mock_leaks(*d.mock, i) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(leaks) / 4000.0, 0.3, 0.03);
  EXPECT_EQ(mock_completion(*d.mock, 17, 20), mock_completion(*d.mock, 17, 20));
}

TEST(Mock, InvalidDescriptors) {
  EXPECT_EQ(kind_of([] { mock_memorizing_backend({}, 0.5, 1); }), ErrorKind::EmptyCorpus);
  EXPECT_EQ(kind_of([] { mock_memorizing_backend(sample().records, 1.5, 1); }), ErrorKind::InvalidArgument);
}

TEST(Http, MissingKeyFailsBeforeAnyRequest) {
  ::unsetenv(kApiKeyEnv);
  const auto d = http_backend("http://127.0.0.1:9", "m");
  EXPECT_EQ(kind_of([&] { make_backend(d); }), ErrorKind::ConfigError);
  ::setenv(kApiKeyEnv, "secret-value", 1);
  EXPECT_NO_THROW(make_backend(d));
  ::unsetenv(kApiKeyEnv);
  EXPECT_EQ(d.to_json().dump().find("secret"), std::string::npos);
}

TEST(Http, ConnectionRefusedIsRetriedThenUpstreamError) {
  auto d = http_backend("http://127.0.0.1:9", "m");
  d.http->retry_budget = 2;
  int sleeps = 0;
  const auto b = make_backend(d, std::string("k"), [&](std::chrono::milliseconds) { ++sleeps; });
  EXPECT_EQ(kind_of([&] { b->complete("p", GenerationConfig{}, 0); }), ErrorKind::UpstreamError);
  EXPECT_EQ(sleeps, 2);
}

TEST(Http, BadEndpoint) {
  EXPECT_EQ(kind_of([] { make_backend(http_backend("127.0.0.1:80", "m"), std::string("k")); }), ErrorKind::ConfigError);
}

TEST(Backoff, NonDecreasingAndCapped) {
  HttpOptions o;
  o.retry_budget = 8;
  o.backoff_initial = std::chrono::milliseconds(300);
  o.backoff_max = std::chrono::milliseconds(5000);
  const auto s = backoff_schedule(o);
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s[0], std::chrono::milliseconds(300));
  EXPECT_EQ(s[1], std::chrono::milliseconds(600));
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i], s[i - 1]);
  EXPECT_EQ(s.back(), std::chrono::milliseconds(5000));
}

TEST(GenerationConfig, TemperatureDrawsAreInRangeAndKeyedOnIndex) {
  GenerationConfig cfg;
  cfg.seed = 4;
  for (std::size_t i = 0; i < 500; ++i) {
    const double t = cfg.temperature_for(i);
    EXPECT_GE(t, 0.5);
    EXPECT_LE(t, 1.0);
    EXPECT_EQ(t, cfg.temperature_for(i));
  }
  cfg.temperature = 0.2;
  EXPECT_EQ(cfg.temperature_for(7), 0.2);
  cfg.max_tokens = 0;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::InvalidConfig);
}

TEST(TokenBudget, ThreeQuartersOfTokensRoundedHalfUp) {
  GenerationConfig cfg;
  EXPECT_EQ(estimate_token_budget(1800, cfg), (TokenBudget{460800, 345600}));
  cfg.max_tokens = 1;
  EXPECT_EQ(estimate_token_budget(1, cfg).approx_words, 1u);   // 0.75
  EXPECT_EQ(estimate_token_budget(2, cfg).approx_words, 2u);   // 1.5
  EXPECT_EQ(estimate_token_budget(3, cfg).approx_words, 2u);   // 2.25
}

TEST(GenerationRecord, JsonRoundTripAndCorruption) {
  GenerationRecord r;
  r.request_index = 3;
  r.prompt = "Subject: \"x\"\n";
  r.completion = "body";
  r.role = Role::Base;
  r.max_tokens = 256;
  r.temperature = 0.625;
  r.prompt_kind = "subject";
  r.subject_index = 0;
  std::ostringstream out;
  write_generations_jsonl({r, r}, out);
  std::istringstream in(out.str());
  const auto back = read_generations_jsonl(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);

  std::istringstream bad("{\"request_index\": \"x\"}\n");
  EXPECT_EQ(kind_of([&] { read_generations_jsonl(bad); }), ErrorKind::CorruptCheckpoint);
}

TEST(Roles, ParseAndPrint) {
  EXPECT_EQ(to_string(Role::FineTuned), "fine_tuned");
  EXPECT_EQ(parse_role("base"), Role::Base);
}

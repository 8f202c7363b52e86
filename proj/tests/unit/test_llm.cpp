#include "test_support.hpp"

#include <csicl/llm/http_transport.hpp>

#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <random>
#include <set>
#include <thread>

using namespace csicl;
using namespace csicl::llm;

namespace {

ChatRequest golden_request() {
    ChatRequest r;
    r.model_id = "sim-1";
    r.system_text = std::string(icl::kSystemPrompt);
    r.user_text = "Question: not ( True and False ) is\nAnswer:";
    return r;
}

} // namespace

// ---- cache key --------------------------------------------------------

// Digests computed with Python hashlib over json.dumps(sort_keys=True,
// separators=(",", ":")) of the same canonical request.
TEST(CacheKey, Golden) {
    EXPECT_EQ(cache_key(golden_request()), "47986b98e6928256831333ab5f549d66f7295ba0721f8c1fe649c6210f302c01");
    auto sc = golden_request();
    sc.temperature = 0.7;
    sc.n_samples = 3;
    EXPECT_EQ(cache_key(sc), "6dd52c9b8c8f96f2e17a53dbf08f58ee761cb869cd457dd87835204ce7995c36");
    EXPECT_EQ(embed_cache_key("sim-embed", "Café"), "be07ea21c52744036117a97eb38594ebeb935a6a24ece01523161875ba5d54d7");
}

TEST(CacheKey, ConstructionOrderDoesNotMatter) {
    ChatRequest a;
    a.n_samples = 1;
    a.user_text = "u";
    a.model_id = "m";
    a.system_text = "s";
    ChatRequest b;
    b.model_id = "m";
    b.system_text = "s";
    b.user_text = "u";
    b.n_samples = 1;
    EXPECT_EQ(cache_key(a), cache_key(b));
    // Canonical JSON does not depend on key insertion order either.
    auto j1 = nlohmann::json::parse(R"({"b":1,"a":2})");
    auto j2 = nlohmann::json::parse(R"({"a":2,"b":1})");
    EXPECT_EQ(sha256_hex(j1.dump()), sha256_hex(j2.dump()));
}

TEST(CacheKey, EverySemanticFieldMatters) {
    const auto base = golden_request();
    std::set<std::string> keys{cache_key(base)};
    auto v = base;
    v.model_id = "sim-2";
    keys.insert(cache_key(v));
    v = base;
    v.system_text += " ";
    keys.insert(cache_key(v));
    v = base;
    v.user_text += "x";
    keys.insert(cache_key(v));
    v = base;
    v.temperature = 0.7;
    keys.insert(cache_key(v));
    v = base;
    v.max_output_tokens = 256;
    keys.insert(cache_key(v));
    v = base;
    v.temperature = 0.7;
    v.n_samples = 3;
    keys.insert(cache_key(v));
    EXPECT_EQ(keys.size(), 7u);
}

TEST(CacheKey, NoCollisionsOver100kRequests) {
    std::mt19937_64 rng(20260101);
    std::set<std::string> seen_requests;
    std::set<std::string> keys;
    while (seen_requests.size() < 100000) {
        ChatRequest r;
        r.model_id = "m" + std::to_string(rng() % 5);
        r.system_text = rng() % 2 ? "sys" : "";
        r.user_text = "q" + std::to_string(rng());
        r.temperature = (rng() % 3) * 0.5;
        r.max_output_tokens = rng() % 4;
        r.n_samples = r.temperature == 0 ? 1 : 1 + static_cast<std::uint32_t>(rng() % 3);
        if (!seen_requests.insert(canonical_json(r).dump()).second) continue;
        keys.insert(cache_key(r));
    }
    EXPECT_EQ(keys.size(), 100000u);
}

TEST(ChatRequest, Validation) {
    auto r = golden_request();
    EXPECT_NO_THROW(r.validate());
    r.n_samples = 3;
    EXPECT_THROW(r.validate(), PreconditionError);
    r.temperature = 0.7;
    EXPECT_NO_THROW(r.validate());
    r.temperature = 2.5;
    EXPECT_THROW(r.validate(), PreconditionError);
    r.temperature = 0.7;
    r.n_samples = 0;
    EXPECT_THROW(r.validate(), PreconditionError);
}

// ---- client + cache ----------------------------------------------------

TEST(LlmClient, CacheRoundTripIsByteIdentical) {
    test::TempDir dir;
    auto t = std::make_shared<test::CountingTransport>();
    LlmClient c(t, dir.path(), test::no_sleep_options());
    const auto a = c.complete(golden_request());
    const auto b = c.complete(golden_request());
    EXPECT_EQ(t->calls, 1);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(c.cache_hits(), 1u);
    const auto entry = nlohmann::json::parse(test::read_file(dir / cache_key(golden_request())));
    EXPECT_EQ(entry.at("request"), canonical_json(golden_request()));
    EXPECT_EQ(entry.at("response").at("texts"), nlohmann::json::array({"reply 0"}));
    EXPECT_FALSE(entry.at("created_at").get<std::string>().empty());

    // A second client on the same directory is served from disk.
    auto t2 = std::make_shared<test::CountingTransport>();
    LlmClient c2(t2, dir.path(), test::no_sleep_options());
    EXPECT_EQ(c2.complete(golden_request()), a);
    EXPECT_EQ(t2->calls, 0);
}

TEST(LlmClient, SelfConsistencyReturnsAllSamples) {
    auto t = std::make_shared<test::CountingTransport>();
    LlmClient c(t, std::nullopt, test::no_sleep_options());
    auto r = golden_request();
    r.temperature = 0.7;
    r.n_samples = 3;
    EXPECT_EQ(c.complete(r).texts.size(), 3u);
}

TEST(LlmClient, WrongSampleCountIsProviderError) {
    auto t = std::make_shared<test::CountingTransport>();
    t->on_complete = [](const ChatRequest&) { return ChatResponse{{"only one"}}; };
    LlmClient c(t, std::nullopt, test::no_sleep_options());
    auto r = golden_request();
    r.temperature = 0.7;
    r.n_samples = 3;
    EXPECT_THROW(c.complete(r), ProviderError);
}

TEST(LlmClient, RetriesTransientWithBackoff) {
    auto t = std::make_shared<test::CountingTransport>();
    std::atomic<int> failures{2};
    t->on_complete = [&](const ChatRequest&) {
        if (failures-- > 0) throw TransientError("HTTP 429");
        return ChatResponse{{"ok"}};
    };
    std::vector<long> sleeps;
    auto opts = test::no_sleep_options();
    opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(static_cast<long>(d.count())); };
    LlmClient c(t, std::nullopt, opts);
    EXPECT_EQ(c.complete(golden_request()).texts.front(), "ok");
    EXPECT_EQ(t->calls, 3);
    EXPECT_EQ(sleeps, (std::vector<long>{500, 1000}));
}

TEST(LlmClient, BackoffIsCapped) {
    auto t = std::make_shared<test::CountingTransport>();
    t->on_complete = [](const ChatRequest&) -> ChatResponse { throw TransientError("down"); };
    std::vector<long> sleeps;
    auto opts = test::no_sleep_options();
    opts.retry.max_attempts = 6;
    opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(static_cast<long>(d.count())); };
    LlmClient c(t, std::nullopt, opts);
    EXPECT_THROW(c.complete(golden_request()), RetriesExhaustedError);
    EXPECT_EQ(sleeps, (std::vector<long>{500, 1000, 2000, 4000, 4000}));
}

TEST(LlmClient, ExhaustedRetries) {
    auto t = std::make_shared<test::CountingTransport>();
    t->on_complete = [](const ChatRequest&) -> ChatResponse { throw TransientError("timeout"); };
    LlmClient c(t, std::nullopt, test::no_sleep_options());
    try {
        c.complete(golden_request());
        FAIL();
    } catch (const RetriesExhaustedError& e) {
        EXPECT_NE(std::string(e.what()).find("timeout"), std::string::npos);
    }
    EXPECT_EQ(t->calls, 3);
}

TEST(LlmClient, AuthAndProviderErrorsAreNotRetried) {
    auto t = std::make_shared<test::CountingTransport>();
    t->on_complete = [](const ChatRequest&) -> ChatResponse { throw AuthError("HTTP 401"); };
    LlmClient c(t, std::nullopt, test::no_sleep_options());
    EXPECT_THROW(c.complete(golden_request()), AuthError);
    EXPECT_EQ(t->calls, 1);
    t->on_complete = [](const ChatRequest&) -> ChatResponse { throw ProviderError(400, R"({"error":"bad"})"); };
    try {
        c.complete(golden_request());
        FAIL();
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.status(), 400);
        EXPECT_NE(std::string(e.what()).find(R"({"error":"bad"})"), std::string::npos);
    }
    EXPECT_EQ(t->calls, 2);
}

TEST(LlmClient, ParallelismLimitIsRespected) {
    auto t = std::make_shared<test::CountingTransport>();
    std::atomic<int> live{0};
    std::atomic<int> peak{0};
    t->on_complete = [&](const ChatRequest& r) {
        const int now = ++live;
        int p = peak;
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --live;
        return ChatResponse{{r.user_text}};
    };
    LlmClient c(t, std::nullopt, test::no_sleep_options(3));
    std::vector<std::jthread> threads;
    for (int i = 0; i < 12; ++i) {
        threads.emplace_back([&, i] {
            auto r = golden_request();
            r.user_text = std::to_string(i);
            c.complete(r);
        });
    }
    threads.clear();
    EXPECT_EQ(t->calls, 12);
    EXPECT_LE(peak.load(), 3);
}

TEST(LlmClient, ConcurrentIdenticalRequestsHitTransportOnce) {
    test::TempDir dir;
    auto t = std::make_shared<test::CountingTransport>();
    LlmClient c(t, dir.path(), test::no_sleep_options(8));
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { c.complete(golden_request()); });
    threads.clear();
    EXPECT_EQ(t->calls, 1);
}

TEST(ReplayTransport, MissNamesDigest) {
    test::TempDir dir;
    LlmClient c(std::make_shared<ReplayTransport>(dir.path()), std::nullopt);
    auto r = golden_request();
    r.user_text = "never recorded";
    try {
        c.complete(r);
        FAIL();
    } catch (const FixtureMissError& e) {
        EXPECT_EQ(e.digest(), cache_key(r));
        EXPECT_NE(std::string(e.what()).find(cache_key(r)), std::string::npos);
    }
}

TEST(ReplayTransport, ServesRecordedEntries) {
    test::TempDir dir;
    {
        LlmClient rec(std::make_shared<test::CountingTransport>(), dir.path());
        rec.complete(golden_request());
        const std::vector<std::string> texts{"alpha", "beta"};
        rec.embed("emb", texts);
    }
    LlmClient c(std::make_shared<ReplayTransport>(dir.path()), std::nullopt);
    EXPECT_EQ(c.complete(golden_request()).texts, std::vector<std::string>{"reply 0"});
    const std::vector<std::string> texts{"alpha", "beta"};
    const auto v = c.embed("emb", texts);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0].size(), 4u);
    EXPECT_EQ(v[1].size(), 4u);
    EXPECT_EQ(c.transport().name(), "replay");
}

TEST(Embed, EmptyInputIsAnError) {
    LlmClient c(std::make_shared<test::CountingTransport>(), std::nullopt);
    EXPECT_THROW(c.embed("emb", std::vector<std::string>{}), PreconditionError);
}

TEST(Embed, RepeatedTextIsCached) {
    test::TempDir dir;
    auto t = std::make_shared<test::CountingTransport>();
    LlmClient c(t, dir.path());
    const std::vector<std::string> texts{"same", "same", "other"};
    const auto v = c.embed("emb", texts);
    EXPECT_EQ(v[0], v[1]);
    EXPECT_EQ(t->embed_calls, 1);
    const std::vector<std::string> again{"same"};
    EXPECT_EQ(c.embed("emb", again).front(), v[0]);
    EXPECT_EQ(t->embed_calls, 1);
}

TEST(Embed, InconsistentDimensionsRejected) {
    auto t = std::make_shared<test::CountingTransport>();
    t->on_embed = [](std::span<const std::string> texts) {
        std::vector<Embedding> out;
        for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(Embedding(i + 1, 1.0));
        return out;
    };
    LlmClient c(t, std::nullopt);
    EXPECT_THROW(c.embed("emb", std::vector<std::string>{"a", "b"}), ProviderError);
}

// ---- token counting ---------------------------------------------------

TEST(Tokens, WhitespaceScheme) {
    WhitespaceCounter w;
    EXPECT_EQ(w.count(""), 0u);
    EXPECT_EQ(w.count("a b c"), 3u);
    EXPECT_EQ(w.count("  a\n\tb  "), 2u);
}

TEST(Tokens, WhitespaceIsAdditive) {
    WhitespaceCounter w;
    std::mt19937_64 rng(3);
    const std::string alphabet = "ab \n\tc";
    for (int i = 0; i < 2000; ++i) {
        std::string a, b;
        for (auto n = rng() % 12; n > 0; --n) a += alphabet[rng() % alphabet.size()];
        for (auto n = rng() % 12; n > 0; --n) b += alphabet[rng() % alphabet.size()];
        ASSERT_EQ(w.count(a + " " + b), w.count(a) + w.count(b)) << a << "|" << b;
    }
}

namespace {

// Brute force: at every position try every vocabulary entry, keep the longest.
std::size_t brute_longest_match(const std::vector<std::string>& vocab, std::string_view text) {
    std::size_t i = 0, n = 0;
    while (i < text.size()) {
        std::size_t best = 0;
        for (const auto& v : vocab) {
            if (text.substr(i, v.size()) == v) best = std::max(best, v.size());
        }
        i += best ? best : 1;
        ++n;
    }
    return n;
}

} // namespace

TEST(Tokens, LongestMatchFixtureParagraph) {
    const auto counter = make_token_counter({"longest_match", (test::kDataDir / "vocab" / "test_vocab.txt").string()});
    const auto paragraph = test::read_file(test::kGoldenDir / "longest_match_paragraph.txt");
    // Recorded with tests/oracles/longest_match_golden.py.
    EXPECT_EQ(counter->count(paragraph), 72u);
    EXPECT_EQ(counter->count(""), 0u);
}

TEST(Tokens, LongestMatchAgreesWithBruteForce) {
    std::mt19937_64 rng(11);
    const std::string alphabet = "abc \n";
    for (int round = 0; round < 300; ++round) {
        std::vector<std::string> vocab;
        for (auto n = 1 + rng() % 8; n > 0; --n) {
            std::string v;
            for (auto len = 1 + rng() % 4; len > 0; --len) v += alphabet[rng() % alphabet.size()];
            vocab.push_back(v);
        }
        LongestMatchCounter lm(vocab);
        std::string text;
        for (auto len = rng() % 40; len > 0; --len) text += alphabet[rng() % alphabet.size()];
        ASSERT_EQ(lm.count(text), brute_longest_match(vocab, text)) << text;
    }
}

TEST(Tokens, MalformedVocabularies) {
    test::TempDir dir;
    test::write_file(dir / "bad.txt", "ok\nbad\\q\n");
    EXPECT_THROW(LongestMatchCounter::from_file(dir / "bad.txt"), DataError);
    test::write_file(dir / "empty.txt", "\n\n");
    EXPECT_THROW(LongestMatchCounter::from_file(dir / "empty.txt"), DataError);
    test::write_file(dir / "bad.tiktoken", "QQ== notanumber\n");
    EXPECT_THROW(BpeCounter::from_file(dir / "bad.tiktoken"), DataError);
    EXPECT_THROW(make_token_counter({"nope", ""}), DataError);
    EXPECT_THROW(make_token_counter({"o200k_base", ""}), DataError);
}

TEST(Tokens, ProviderReportedBypassesCounting) {
    const auto c = make_token_counter({"provider-reported", ""});
    EXPECT_TRUE(c->provider_reported());
    EXPECT_THROW(c->count("x"), PreconditionError);
}

// Goldens produced by tests/oracles/bpe_goldens.py with tiktoken and the
// o200k_base pre-tokenizer pattern over a small trained rank file.
TEST(Tokens, BpeMatchesTiktoken) {
    const auto golden = nlohmann::json::parse(test::read_file(test::kGoldenDir / "bpe_counts.json"));
    const auto bpe = BpeCounter::from_file(test::kDataDir / "vocab" / "tiny_bpe.tiktoken");
    for (const auto& p : golden.at("probes")) {
        const auto text = p.at("text").get<std::string>();
        std::vector<std::string> pieces;
        for (auto s : llm::detail::O200kPreTokenizer::split(text)) pieces.emplace_back(s);
        EXPECT_EQ(pieces, p.at("pieces").get<std::vector<std::string>>()) << text;
        EXPECT_EQ(bpe.count(text), p.at("count").get<std::size_t>()) << text;
    }
}

TEST(Tokens, Base64) {
    EXPECT_EQ(llm::detail::base64_decode("IQ=="), "!");
    EXPECT_EQ(llm::detail::base64_decode("IGFu"), " an");
    EXPECT_EQ(llm::detail::base64_decode("YWI="), "ab");
}

// ---- live transport against a local server ------------------------------

namespace {

class LocalServer {
public:
    LocalServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = nlohmann::json::parse(req.body);
            if (status != 200) {
                res.status = status;
                res.set_content(R"({"error":{"message":"nope"}})", "application/json");
                return;
            }
            nlohmann::json choices = nlohmann::json::array();
            for (int i = 0; i < last_body.value("n", 1); ++i) {
                choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "Answer: " + std::to_string(i)}}}});
            }
            res.set_content(nlohmann::json{{"choices", choices},
                                           {"usage",
                                            {{"prompt_tokens", 42},
                                             {"completion_tokens", 7},
                                             {"prompt_tokens_details", {{"cached_tokens", 32}}}}}}
                                .dump(),
                            "application/json");
        });
        server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            nlohmann::json data = nlohmann::json::array();
            const auto n = body.at("input").size();
            for (std::size_t i = n; i-- > 0;) data.push_back({{"index", i}, {"embedding", {1.0 * i, 2.0, 3.0}}});
            res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::atomic<int> status{200};
    std::string last_auth;
    nlohmann::json last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST(HttpTransport, MissingCredentialIsAuthError) {
    ::unsetenv("CSICL_TEST_NO_SUCH_KEY");
    EXPECT_THROW(HttpTransport({"http://127.0.0.1:1", "/c", "/e", "CSICL_TEST_NO_SUCH_KEY", 1}), AuthError);
}

TEST(HttpTransport, ChatAndEmbeddingsAgainstLocalServer) {
    LocalServer srv;
    ::setenv("CSICL_TEST_KEY", "sekrit", 1);
    HttpTransport t({srv.url(), "/v1/chat/completions", "/v1/embeddings", "CSICL_TEST_KEY", 5});
    EXPECT_TRUE(t.is_live());
    auto r = golden_request();
    r.temperature = 0.7;
    r.n_samples = 3;
    r.max_output_tokens = 64;
    const auto resp = t.complete(r);
    EXPECT_EQ(srv.last_auth, "Bearer sekrit");
    EXPECT_EQ(srv.last_body.at("n"), 3);
    EXPECT_EQ(srv.last_body.at("max_tokens"), 64);
    EXPECT_EQ(srv.last_body.at("messages").size(), 2u);
    EXPECT_EQ(resp.texts, (std::vector<std::string>{"Answer: 0", "Answer: 1", "Answer: 2"}));
    EXPECT_EQ(resp.prompt_tokens, 42u);
    EXPECT_EQ(resp.completion_tokens, 7u);
    EXPECT_EQ(resp.cached_prompt_tokens, 32u);
    EXPECT_GE(resp.latency_seconds, 0.0);

    const std::vector<std::string> texts{"a", "b"};
    const auto v = t.embed("emb", texts);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0], (Embedding{0.0, 2.0, 3.0}));
    EXPECT_EQ(v[1], (Embedding{1.0, 2.0, 3.0}));
}

TEST(HttpTransport, StatusMapping) {
    LocalServer srv;
    ::setenv("CSICL_TEST_KEY", "sekrit", 1);
    HttpTransport t({srv.url(), "/v1/chat/completions", "/v1/embeddings", "CSICL_TEST_KEY", 5});
    srv.status = 401;
    EXPECT_THROW(t.complete(golden_request()), AuthError);
    srv.status = 429;
    EXPECT_THROW(t.complete(golden_request()), TransientError);
    srv.status = 503;
    EXPECT_THROW(t.complete(golden_request()), TransientError);
    srv.status = 400;
    try {
        t.complete(golden_request());
        FAIL();
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.status(), 400);
        EXPECT_NE(std::string(e.what()).find(R"({"error":{"message":"nope"}})"), std::string::npos);
    }
}

TEST(HttpTransport, UnreachableIsTransient) {
    ::setenv("CSICL_TEST_KEY", "sekrit", 1);
    HttpTransport t({"http://127.0.0.1:9", "/c", "/e", "CSICL_TEST_KEY", 1});
    EXPECT_THROW(t.complete(golden_request()), TransientError);
}

#include <gtest/gtest.h>

#include <filesystem>

#include "fakes.hpp"
#include "llmrec/enrichment.hpp"
#include "llmrec/service.hpp"
#include "local_server.hpp"

using namespace llmrec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const fs::path dir = fs::path(LLMREC_TEST_DATA) / "mini";
    data_ = std::make_unique<Dataset>(load_dataset(DatasetPaths::in_directory(dir)));
    provider_ = std::make_unique<SnapshotProvider>(SnapshotProvider::load(dir / "provider_snapshot.jsonl"));
    MockClient describer;
    MetaCache cache;
    resolve_all(*data_, *provider_, describer, cache);
    meta_ = std::make_unique<MetaLookup>(cache.snapshot());
    model_ = std::make_unique<MfModel>(train(data_->ratings(), TrainConfig::defaults(MfKind::Svd), MfKind::Svd));
  }
  static void TearDownTestSuite() {
    model_.reset();
    meta_.reset();
    provider_.reset();
    data_.reset();
  }

  void serve(LlmClient& llm) {
    ServiceOptions options;
    options.profile.this_year = 2025;
    service_ = std::make_unique<Service>(*data_, *model_, *meta_, provider_.get(), llm, RerankOptions{}, options);
    service_->mount(server_.server());
    server_.start();
    client_ = std::make_unique<httplib::Client>(server_.url());
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  static inline std::unique_ptr<Dataset> data_;
  static inline std::unique_ptr<SnapshotProvider> provider_;
  static inline std::unique_ptr<MetaLookup> meta_;
  static inline std::unique_ptr<MfModel> model_;
  std::unique_ptr<Service> service_;
  oracle::LocalServer server_;
  std::unique_ptr<httplib::Client> client_;
};

const json kProfile = {{"preference_text", "I enjoy Sci-Fi and Action movies."},
                       {"favorites", {2571, 109487}},
                       {"rating_pref", true},
                       {"popularity_pref", false},
                       {"year_min", 1990},
                       {"year_max", 2020}};

}  // namespace

TEST_F(ServiceTest, HealthReportsModelAndMode) {
  MockClient llm;
  serve(llm);
  auto res = client_->Get("/api/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("status"), "ok");
  EXPECT_EQ(j.at("model"), "svd");
  EXPECT_EQ(j.at("llm_mode"), "mock");
}

TEST_F(ServiceTest, SearchToleratesTypos) {
  MockClient llm;
  serve(llm);
  auto res = client_->Get("/api/v1/search?q=interstelar");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto results = json::parse(res->body).at("results");
  ASSERT_FALSE(results.empty());
  EXPECT_EQ(results[0].at("movie_id"), 109487);
  EXPECT_EQ(results[0].at("title"), "Interstellar (2014)");
}

TEST_F(ServiceTest, SearchWithoutQueryIsBadRequest) {
  MockClient llm;
  serve(llm);
  auto res = client_->Get("/api/v1/search?limit=3");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("error").at("code"), "UsageError");
}

TEST_F(ServiceTest, ProfileEchoesNormalizedProfile) {
  MockClient llm;
  serve(llm);
  auto res = post("/api/v1/profile", kProfile);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto p = json::parse(res->body).at("profile");
  EXPECT_EQ(p.at("favorites").size(), 2u);
}

TEST_F(ServiceTest, ProfileWithInvertedRangeIsRejected) {
  MockClient llm;
  serve(llm);
  json bad = kProfile;
  bad["year_min"] = 2020;
  bad["year_max"] = 1990;
  auto res = post("/api/v1/profile", bad);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("error").at("code"), "InvalidRange");
}

TEST_F(ServiceTest, RecommendForManualProfile) {
  MockClient llm(MockRule::feature_linear());
  serve(llm);
  auto res = post("/api/v1/recommend", {{"profile", kProfile}, {"n", 5}, {"t", 1.0}, {"m", 0}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = json::parse(res->body);
  ASSERT_EQ(j.at("items").size(), 5u);
  for (const auto& item : j.at("items")) {
    EXPECT_NE(item.at("movie_id"), 2571);
    EXPECT_NE(item.at("movie_id"), 109487);
  }
  EXPECT_EQ(j.at("pool_size"), 5);
}

TEST_F(ServiceTest, RecommendForKnownUserExcludesRatedMovies) {
  MockClient llm;
  serve(llm);
  auto res = post("/api/v1/recommend", {{"user_id", 1}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto rated = data_->user_rated_items(1);
  for (const auto& item : json::parse(res->body).at("items")) {
    EXPECT_EQ(std::count(rated.begin(), rated.end(), item.at("movie_id").get<MovieId>()), 0);
  }
}

TEST_F(ServiceTest, UnknownUserIsNotFound) {
  MockClient llm;
  serve(llm);
  auto res = post("/api/v1/recommend", {{"user_id", 999999}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ServiceTest, InvalidPoolSpecIsBadRequest) {
  MockClient llm;
  serve(llm);
  auto res = post("/api/v1/recommend", {{"profile", kProfile}, {"t", 0.0}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("error").at("code"), "InvalidSpec");
}

TEST_F(ServiceTest, MalformedBodyIsBadRequest) {
  MockClient llm;
  serve(llm);
  auto res = client_->Post("/api/v1/recommend", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, UnreachableModelIsServiceUnavailable) {
  oracle::FunctionClient down([](const ChatRequest&) -> std::string {
    throw Error(Errc::TransportError, "llm_gateway", "connection refused");
  });
  serve(down);
  auto res = post("/api/v1/recommend", {{"profile", kProfile}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(json::parse(res->body).at("error").at("module"), "llm_gateway");
}

TEST_F(ServiceTest, MovieDetailsAndNotFound) {
  MockClient llm;
  serve(llm);
  auto res = client_->Get("/api/v1/movies/2571");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("title"), "The Matrix");
  EXPECT_EQ(j.at("year"), 1999);
  EXPECT_FALSE(j.at("metadata").is_null());

  auto missing = client_->Get("/api/v1/movies/424242");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST(HttpStatus, DomainErrorsMapToStatusCodes) {
  EXPECT_EQ(http_status(Errc::InvalidRange), 400);
  EXPECT_EQ(http_status(Errc::NotFound), 404);
  EXPECT_EQ(http_status(Errc::TransportError), 503);
  EXPECT_EQ(http_status(Errc::IoError), 500);
}

// llmrec: command-line entry points for every pipeline stage.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "llmrec/config.hpp"
#include "llmrec/dataset.hpp"
#include "llmrec/enrichment.hpp"
#include "llmrec/error.hpp"
#include "llmrec/evaluation.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/mf.hpp"
#include "llmrec/openai_client.hpp"
#include "llmrec/pipeline.hpp"
#include "llmrec/profiles.hpp"
#include "llmrec/reranker.hpp"
#include "llmrec/service.hpp"
#include "llmrec/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace llmrec;

namespace {

struct GlobalOptions {
  std::string config_file;
  std::string data_dir;
  std::string work_dir;
  bool json_output = false;
};

struct Context {
  AppConfig config;
  bool json_output = false;

  Dataset load_data() const { return load_dataset(DatasetPaths::in_directory(config.data_dir)); }

  ReportHeader header(const Dataset& data, std::string_view algo, const std::string& llm) const {
    return {config.hash(), data.fingerprint(), std::string(algo), llm, config.split_seed, config.train_seed, {}};
  }

  void emit(const json& j, const std::string& text) const {
    std::cout << (json_output ? j.dump(2) : text) << std::endl;
  }
};

/// "mock:<rule>" selects the offline backend; "dev"/"prod" (or "config") the
/// configured OpenAI-compatible endpoint.
struct LlmChoice {
  std::unique_ptr<LlmClient> client;
  std::unique_ptr<InFlightLimiter> limiter;
  std::string label;

  LlmClient& get() { return limiter ? static_cast<LlmClient&>(*limiter) : *client; }
};

LlmChoice make_llm(const AppConfig& config, const std::string& spec, MockRule oracle_targets = {}) {
  LlmChoice out;
  std::string s = spec;
  if (s.empty() || s == "config") s = config.llm.mode == LlmMode::Mock ? "mock:neutral" : std::string(to_string(config.llm.mode));
  if (s.starts_with("mock")) {
    MockRule rule = parse_mock_rule(s);
    if (rule.kind == MockRule::Kind::Oracle) rule = std::move(oracle_targets);
    out.client = std::make_unique<MockClient>(std::move(rule));
    out.label = s.starts_with("mock:") ? s : "mock:" + s.substr(4);
    return out;
  }
  EndpointConfig endpoint = config.llm;
  endpoint.mode = parse_llm_mode(s);
  if (endpoint.mode == LlmMode::Mock) return make_llm(config, "mock:neutral");
  out.client = std::make_unique<OpenAiClient>(endpoint);
  out.limiter = std::make_unique<InFlightLimiter>(*out.client, config.in_flight_cap);
  out.label = std::string(to_string(endpoint.mode)) + ":" + endpoint.model;
  return out;
}

std::unique_ptr<SnapshotProvider> open_provider(const AppConfig& config) {
  const fs::path path = config.snapshot_path();
  if (!fs::exists(path)) return std::make_unique<SnapshotProvider>();
  return std::make_unique<SnapshotProvider>(SnapshotProvider::load(path));
}

/// Metadata for every catalog movie, resolving whatever the cache lacks.
MetaLookup ensure_metadata(const Context& ctx, const Dataset& data, LlmClient& llm, bool quiet = false) {
  fs::create_directories(ctx.config.work_dir);
  MetaCache cache(ctx.config.meta_cache_path());
  if (cache.size() < data.catalog().size()) {
    const auto provider = open_provider(ctx.config);
    const auto summary = resolve_all(data, *provider, llm, cache, ctx.config.in_flight_cap);
    if (!quiet) {
      std::cerr << "metadata: resolved " << summary.resolved << " (" << summary.generated << " generated, "
                << summary.failures.size() << " failed)\n";
    }
  }
  return cache.snapshot();
}

MfModel model_for(const Context& ctx, const Dataset& data, MfKind kind) {
  const fs::path path = ctx.config.checkpoint_path(kind);
  if (fs::exists(path)) {
    MfModel m = load_checkpoint(path);
    if (m.dataset_fingerprint == data.fingerprint()) return m;
    std::cerr << "checkpoint " << path << " was trained on other data; retraining\n";
  }
  TrainConfig tc = TrainConfig::defaults(kind);
  tc.seed = ctx.config.train_seed;
  MfModel m = train(data.ratings(), tc, kind);
  m.dataset_fingerprint = data.fingerprint();
  return m;
}

ProtocolOptions protocol_options(const AppConfig& config, MfKind algo) {
  ProtocolOptions o;
  o.algo = algo;
  TrainConfig tc = TrainConfig::defaults(algo);
  tc.seed = config.train_seed;
  o.train = tc;
  o.chr_threshold = config.chr_threshold;
  o.profile = {config.favorites, config.thresholds, config.this_year};
  o.rerank.retries = config.llm_retries;
  o.rerank.parallelism = config.llm.mode == LlmMode::Mock ? 1 : config.in_flight_cap;
  o.split_seed = config.split_seed;
  o.pool_cache_dir = config.pool_cache_dir();
  return o;
}

MockRule oracle_for(const Dataset& data, Protocol protocol, std::uint64_t seed) {
  std::map<UserId, std::set<MovieId>> targets;
  if (protocol == Protocol::Loo) {
    for (const auto& [u, r] : loo_split(data.ratings(), seed).held_out) targets[u].insert(r.movie_id);
  } else {
    for (const auto& r : stratified_split(data.ratings(), seed).test) targets[r.user_id].insert(r.movie_id);
  }
  return MockRule::oracle(std::move(targets));
}

void write_outputs(const fs::path& dir, const std::string& stem, const json& j, const std::string& text) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  write_text(dir / (stem + ".json"), j.dump(2) + "\n");
  write_text(dir / (stem + ".txt"), text);
}

// ---- subcommands -------------------------------------------------------------------

int cmd_synth(const Context& ctx, const std::string& out, SyntheticSpec spec) {
  const auto corpus = generate_synthetic(spec);
  write_synthetic(corpus, out);
  const json j{{"out", out},
               {"ratings", corpus.data.ratings().size()},
               {"users", corpus.data.user_count()},
               {"movies", corpus.data.catalog().size()},
               {"snapshot_records", corpus.snapshot.size()},
               {"fingerprint", corpus.data.fingerprint()}};
  ctx.emit(j, "wrote synthetic corpus to " + out + " (" + std::to_string(corpus.data.ratings().size()) + " ratings, " +
                  std::to_string(corpus.data.user_count()) + " users, " + std::to_string(corpus.data.catalog().size()) +
                  " movies)");
  return 0;
}

int cmd_ingest(const Context& ctx) {
  const Dataset data = ctx.load_data();
  std::size_t with_links = 0;
  for (const auto& [_, m] : data.catalog()) with_links += m.external_id ? 1 : 0;
  const json j{{"config_hash", ctx.config.hash()},
               {"data_dir", ctx.config.data_dir.string()},
               {"ratings", data.ratings().size()},
               {"users", data.user_count()},
               {"movies", data.catalog().size()},
               {"movies_with_external_id", with_links},
               {"fingerprint", data.fingerprint()}};
  ctx.emit(j, "ok: " + std::to_string(data.ratings().size()) + " ratings, " + std::to_string(data.user_count()) +
                  " users, " + std::to_string(data.catalog().size()) + " movies, fingerprint " + data.fingerprint());
  return 0;
}

int cmd_gen_data(const Context& ctx, const std::string& llm_spec) {
  const Dataset data = ctx.load_data();
  auto llm = make_llm(ctx.config, llm_spec);
  const MetaLookup meta = ensure_metadata(ctx, data, llm.get());

  const AutoProfileOptions popts{ctx.config.favorites, ctx.config.thresholds, ctx.config.this_year};
  std::vector<PreferenceProfile> full, loo;
  const auto split = loo_split(data.ratings(), ctx.config.split_seed);
  const auto train_by_user = detail::group_by_user(split.train);
  for (UserId u : data.users()) {
    full.push_back(build_auto_profile(u, data.user_ratings(u), data.catalog(), meta, popts));
    auto held = split.held_out.find(u);
    auto train = train_by_user.find(u);
    if (held != split.held_out.end() && train != train_by_user.end()) {
      loo.push_back(build_auto_profile(u, train->second, data.catalog(), meta, popts, held->second.movie_id));
    }
  }
  write_profiles(ctx.config.profiles_path(), full);
  const fs::path loo_path = ctx.config.work_dir / "profiles_loo.jsonl";
  write_profiles(loo_path, loo);
  const auto violations = profile_integrity_violations(read_profiles(loo_path), split.held_out);
  if (!violations.empty()) {
    throw Error(Errc::KeyMismatch, "preference_profiles",
                std::to_string(violations.size()) + " leave-one-out profiles list their held-out movie");
  }
  const json j{{"config_hash", ctx.config.hash()},     {"fingerprint", data.fingerprint()},
               {"metadata_records", meta.size()},       {"profiles", full.size()},
               {"loo_profiles", loo.size()},            {"profiles_path", ctx.config.profiles_path().string()},
               {"loo_profiles_path", loo_path.string()}, {"llm", llm.label}};
  ctx.emit(j, "metadata for " + std::to_string(meta.size()) + " movies; " + std::to_string(full.size()) +
                  " profiles written to " + ctx.config.profiles_path().string());
  return 0;
}

int cmd_train(const Context& ctx, MfKind kind, std::optional<int> epochs, std::optional<int> factors) {
  const Dataset data = ctx.load_data();
  TrainConfig tc = TrainConfig::defaults(kind);
  tc.seed = ctx.config.train_seed;
  if (epochs) tc.epochs = *epochs;
  if (factors) tc.factors = *factors;
  MfModel model = train(data.ratings(), tc, kind);
  model.dataset_fingerprint = data.fingerprint();
  fs::create_directories(ctx.config.work_dir);
  const fs::path path = ctx.config.checkpoint_path(kind);
  save_checkpoint(model, path);
  double se = 0.0;
  for (const auto& r : data.ratings()) {
    const double e = predict(model, r.user_id, r.movie_id) - r.value;
    se += e * e;
  }
  const double rmse = std::sqrt(se / static_cast<double>(data.ratings().size()));
  const json j{{"config_hash", ctx.config.hash()}, {"fingerprint", data.fingerprint()}, {"algo", to_string(kind)},
               {"train", to_json(tc)},             {"train_rmse", rmse},                {"checkpoint", path.string()}};
  ctx.emit(j, "trained " + std::string(to_string(kind)) + " (train RMSE " + fixed(rmse, 4) + "), checkpoint " + path.string());
  return 0;
}

struct RecommendArgs {
  std::optional<UserId> user;
  std::string profile_file;
  int n = 10;
  std::optional<double> t;
  std::optional<int> m;
  std::string llm = "config";
  bool loo = false;
  std::string algo_name = "svd";
  MfKind algo = MfKind::Svd;
};

int cmd_recommend(const Context& ctx, const RecommendArgs& a) {
  if (!a.user && a.profile_file.empty()) throw Error(Errc::UsageError, "service_cli", "give --user or --profile");
  const Dataset data = ctx.load_data();
  PoolSpec spec = ctx.config.rerank;
  spec.n = a.n;
  if (a.t) spec.t = *a.t;
  if (a.m) spec.m = *a.m;
  if (a.loo && !a.t && !a.m) spec = PoolSpec::with_search_count(a.n, 100);
  spec.validate();

  auto llm = make_llm(ctx.config, a.llm, oracle_for(data, Protocol::Loo, ctx.config.split_seed));
  const MetaLookup meta = ensure_metadata(ctx, data, llm.get(), true);
  const AutoProfileOptions popts{ctx.config.favorites, ctx.config.thresholds, ctx.config.this_year};

  std::optional<MfModel> model;
  PreferenceProfile profile;
  std::set<MovieId> exclude;
  json extra = json::object();
  if (a.loo) {
    if (!a.user) throw Error(Errc::UsageError, "service_cli", "--loo needs --user");
    const auto split = loo_split(data.ratings(), ctx.config.split_seed);
    auto held = split.held_out.find(*a.user);
    if (held == split.held_out.end()) {
      throw Error(Errc::MissingUser, "evaluation", "user " + std::to_string(*a.user) + " has no held-out rating");
    }
    TrainConfig tc = TrainConfig::defaults(a.algo);
    tc.seed = ctx.config.train_seed;
    model = train(split.train, tc, a.algo);
    std::vector<Rating> mine;
    for (const auto& r : split.train) {
      if (r.user_id == *a.user) {
        mine.push_back(r);
        exclude.insert(r.movie_id);
      }
    }
    profile = build_auto_profile(*a.user, mine, data.catalog(), meta, popts, held->second.movie_id);
    extra["held_out"] = {{"movie_id", held->second.movie_id}, {"rating", held->second.value}};
  } else {
    model = model_for(ctx, data, a.algo);
    if (!a.profile_file.empty()) {
      std::ifstream in(a.profile_file);
      if (!in) throw Error(Errc::MissingFile, "service_cli", "profile file not found: " + a.profile_file);
      profile = profile_from_json(json::parse(in), &data.catalog(), ctx.config.this_year);
      if (a.user) profile.user_id = a.user;
      for (const auto& f : profile.favorites) exclude.insert(f.movie_id);
    } else {
      profile = build_auto_profile(*a.user, data.user_ratings(*a.user), data.catalog(), meta, popts);
    }
    if (a.user) {
      for (MovieId id : data.user_rated_items(*a.user)) exclude.insert(id);
    }
  }

  RerankOptions ro;
  ro.retries = ctx.config.llm_retries;
  ro.parallelism = llm.limiter ? ctx.config.in_flight_cap : 1;
  const Reranker reranker(*model, data.catalog(), meta, llm.get(), ro);
  const auto rec = reranker.recommend(profile, spec, exclude, a.user);
  json j = recommendation_json(a.user, rec, data.catalog());
  j["header"] = ctx.header(data, to_string(a.algo), llm.label).to_json();
  j["pool_size"] = rec.pool.size();
  j.update(extra);

  std::string text = "# config " + ctx.config.hash() + "  dataset " + data.fingerprint() + "  llm " + llm.label + "\n";
  std::vector<std::vector<std::string>> rows{{"Rank", "Movie", "Sim", "Base"}};
  for (std::size_t r = 0; r < rec.items.size(); ++r) {
    const auto& it = rec.items[r];
    rows.push_back({std::to_string(r + 1), title_with_year(data.catalog().at(it.movie_id)), format_score(it.sim),
                    fixed(it.base_pred, 3)});
  }
  text += detail::render_table(rows);
  if (extra.contains("held_out")) {
    const MovieId h = extra["held_out"]["movie_id"];
    std::string rank = "not recommended";
    for (std::size_t r = 0; r < rec.items.size(); ++r) {
      if (rec.items[r].movie_id == h) rank = "rank " + std::to_string(r + 1);
    }
    text += "held-out movie " + title_with_year(data.catalog().at(h)) + ": " + rank + "\n";
  }
  ctx.emit(j, text);
  return 0;
}

struct EvalArgs {
  std::string protocol = "loo";
  std::string algo_name = "svd";
  MfKind algo = MfKind::Svd;
  std::string llm = "config";
  std::optional<std::size_t> max_users;
  int workers = 1;
  std::string out;
  bool no_pool_cache = false;
};

ProtocolOptions eval_options(const Context& ctx, const EvalArgs& a) {
  ProtocolOptions o = protocol_options(ctx.config, a.algo);
  o.max_users = a.max_users;
  o.workers = a.workers;
  if (a.no_pool_cache) o.pool_cache_dir.clear();
  return o;
}

int cmd_evaluate(const Context& ctx, const EvalArgs& a) {
  const Protocol protocol = parse_protocol(a.protocol);
  const Dataset data = ctx.load_data();
  auto llm = make_llm(ctx.config, a.llm, oracle_for(data, protocol, ctx.config.split_seed));
  const MetaLookup meta = ensure_metadata(ctx, data, llm.get(), ctx.json_output);
  const ProtocolOptions o = eval_options(ctx, a);
  ReportHeader header = ctx.header(data, to_string(a.algo), llm.label);
  header.parameters = {{"protocol", a.protocol},
                       {"search_count", o.search_count},
                       {"favorites", o.profile.favorites},
                       {"this_year", o.profile.this_year},
                       {"rating_pref_threshold", o.profile.thresholds.rating},
                       {"popularity_pref_threshold", o.profile.thresholds.popularity},
                       {"train", to_json(o.train_config())}};
  json report;
  if (protocol == Protocol::Loo) {
    header.parameters["ns"] = o.ns;
    header.parameters["chr_threshold"] = o.chr_threshold;
    header.parameters["held_out_rule"] = "latest timestamp per user, ties to larger movie id";
    const auto outcome = run_loo(data, meta, llm.get(), o);
    report = loo_report_json(header, outcome, o);
    const auto profiles = profiles_of(outcome.runs);
    report["profile_integrity_violations"] = profile_integrity_violations(profiles, outcome.split.held_out).size();
    if (!a.out.empty()) write_profiles(fs::path(a.out) / "profiles_loo.jsonl", profiles);
  } else {
    header.parameters["k"] = o.k;
    header.parameters["relevance"] = "every test interaction";
    header.parameters["split"] = "per-item shuffle, floor(count/4) to test (min 1 when count >= 2)";
    const auto outcome = run_ranking(data, meta, llm.get(), o);
    report = ranking_report_json(header, outcome, o);
  }
  const std::string text = report_text(report);
  write_outputs(a.out, "report_" + a.protocol + "_" + std::string(to_string(a.algo)), report, text);
  ctx.emit(report, text);
  return 0;
}

int cmd_ablate(const Context& ctx, const EvalArgs& a) {
  const Dataset data = ctx.load_data();
  auto llm = make_llm(ctx.config, a.llm, oracle_for(data, Protocol::Loo, ctx.config.split_seed));
  const MetaLookup meta = ensure_metadata(ctx, data, llm.get(), ctx.json_output);
  const ProtocolOptions o = eval_options(ctx, a);
  ReportHeader header = ctx.header(data, to_string(a.algo), llm.label);
  header.parameters = {{"protocol", "loo"}, {"ns", o.ns}, {"search_count", o.search_count}};
  const auto report = ablation_report_json(header, run_ablation(data, meta, llm.get(), o));
  const std::string text = ablation_text(report);
  write_outputs(a.out, "ablation_" + std::string(to_string(a.algo)), report, text);
  ctx.emit(report, text);
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Context& ctx, const std::string& host, int port, const std::string& static_dir,
              const std::string& llm_spec, MfKind algo) {
  const Dataset data = ctx.load_data();
  auto llm = make_llm(ctx.config, llm_spec);
  const MetaLookup meta = ensure_metadata(ctx, data, llm.get());
  const MfModel model = model_for(ctx, data, algo);
  const auto provider = open_provider(ctx.config);
  RerankOptions ro;
  ro.retries = ctx.config.llm_retries;
  ro.parallelism = llm.limiter ? ctx.config.in_flight_cap : 1;
  ServiceOptions so;
  so.default_spec = ctx.config.rerank;
  so.profile = {ctx.config.favorites, ctx.config.thresholds, ctx.config.this_year};
  so.static_dir = static_dir;
  const Service service(data, model, meta, provider.get(), llm.get(), ro, so);
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "serving /api/v1 on http://" << host << ":" << port << " (llm " << llm.label << ")\n";
  if (!server.listen(host, port)) throw Error(Errc::IoError, "service_cli", "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

void print_error(const Error& e) {
  std::cerr << error_body(e.code(), e.module(), e.what()).dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-enhanced re-ranking on top of SVD / SVD++ recommenders"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_file, "TOML config file");
  app.add_option("--data-dir", g.data_dir, "MovieLens-format data directory (overrides config)");
  app.add_option("--work-dir", g.work_dir, "caches, checkpoints and profiles (overrides config)");
  app.add_flag("--json", g.json_output, "print JSON instead of text");

  const auto algos = CLI::IsMember({"svd", "svdpp", "svd++"}, CLI::ignore_case);

  auto* synth = app.add_subcommand("synth", "write a synthetic MovieLens-format corpus with a provider snapshot");
  std::string synth_out;
  SyntheticSpec synth_spec;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", synth_spec.users);
  synth->add_option("--movies", synth_spec.movies);
  synth->add_option("--ratings", synth_spec.target_ratings);
  synth->add_option("--seed", synth_spec.seed);

  auto* ingest = app.add_subcommand("ingest", "validate and fingerprint the dataset");

  auto* gen = app.add_subcommand("gen-data", "resolve metadata for every movie and write profile artifacts");
  std::string gen_llm = "config";
  gen->add_option("--llm", gen_llm, "mock:<rule>, dev, prod or config");

  auto* trn = app.add_subcommand("train", "fit SVD or SVD++ on all ratings and write a checkpoint");
  std::string train_algo = "svd";
  std::optional<int> epochs, factors;
  trn->add_option("--algo", train_algo)->check(algos);
  trn->add_option("--epochs", epochs);
  trn->add_option("--factors", factors);

  auto* rec = app.add_subcommand("recommend", "top-N for one user or a manual profile");
  RecommendArgs ra;
  rec->add_option("--user", ra.user);
  rec->add_option("--profile", ra.profile_file, "profile JSON file");
  rec->add_option("--n", ra.n);
  rec->add_option("--t", ra.t);
  rec->add_option("--m", ra.m);
  rec->add_option("--llm", ra.llm);
  rec->add_option("--algo", ra.algo_name)->check(algos);
  rec->add_flag("--loo", ra.loo, "train without the user's latest rating and report where it lands");

  EvalArgs ea;
  auto* eval = app.add_subcommand("evaluate", "base vs LLM-enhanced evaluation");
  auto* abl = app.add_subcommand("ablate", "leave-one-out with each prompt component dropped in turn");
  for (auto* sub : {eval, abl}) {
    sub->add_option("--algo", ea.algo_name)->check(algos);
    sub->add_option("--llm", ea.llm);
    sub->add_option("--max-users", ea.max_users, "evaluate only the first users by id");
    sub->add_option("--workers", ea.workers);
    sub->add_option("--out", ea.out, "directory for report files");
    sub->add_flag("--no-pool-cache", ea.no_pool_cache);
  }
  eval->add_option("--protocol", ea.protocol)->check(CLI::IsMember({"loo", "ranking"}));

  auto* serve = app.add_subcommand("serve", "HTTP JSON API under /api/v1");
  std::string host = "127.0.0.1", static_dir, serve_llm = "config";
  int port = 8080;
  std::string serve_algo = "svd";
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--static", static_dir, "directory served at /");
  serve->add_option("--llm", serve_llm);
  serve->add_option("--algo", serve_algo)->check(algos);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(Error(Errc::UsageError, "service_cli", e.what()));
    return 2;
  }

  try {
    Context ctx;
    ctx.config = load_config(g.config_file);
    if (!g.data_dir.empty()) ctx.config.data_dir = g.data_dir;
    if (!g.work_dir.empty()) ctx.config.work_dir = g.work_dir;
    ctx.json_output = g.json_output;
    ra.algo = parse_mf_kind(ra.algo_name);
    ea.algo = parse_mf_kind(ea.algo_name);

    if (*synth) return cmd_synth(ctx, synth_out, synth_spec);
    if (*ingest) return cmd_ingest(ctx);
    if (*gen) return cmd_gen_data(ctx, gen_llm);
    if (*trn) return cmd_train(ctx, parse_mf_kind(train_algo), epochs, factors);
    if (*rec) return cmd_recommend(ctx, ra);
    if (*eval) return cmd_evaluate(ctx, ea);
    if (*abl) return cmd_ablate(ctx, ea);
    if (*serve) return cmd_serve(ctx, host, port, static_dir, serve_llm, parse_mf_kind(serve_algo));
  } catch (const Error& e) {
    print_error(e);
    return e.code() == Errc::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    print_error(Error(Errc::IoError, "service_cli", e.what()));
    return 1;
  }
  return 0;
}

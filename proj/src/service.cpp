#include "service.hpp"

#include <algorithm>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>
#include <vector>

#include "httplib.h"
#include "impact.hpp"
#include "json.hpp"
#include "log.hpp"
#include "metrics.hpp"
#include "plan_io.hpp"
#include "solver.hpp"

namespace schoolmerge::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kApi = R"(/api(?:/v1)?)";

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct InstanceEntry {
  std::string id;
  std::shared_ptr<const DistrictInstance> instance;
  double baseline_d = 0.0;
  std::optional<double> gearys_c;
  std::optional<impact::BlockWeights> blocks;
  std::optional<impact::TravelMatrix> travel;
};

enum class State { queued, running, done, failed, cancelled };

const char* to_string(State s) {
  switch (s) {
    case State::queued: return "queued";
    case State::running: return "running";
    case State::done: return "done";
    case State::failed: return "failed";
    case State::cancelled: return "cancelled";
  }
  return "failed";
}

std::optional<State> state_from(const std::string& s) {
  for (auto st : {State::queued, State::running, State::done, State::failed, State::cancelled}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

bool terminal(State s) { return s == State::done || s == State::failed || s == State::cancelled; }

struct Job {
  std::string id;
  std::string instance_id;
  json request;
  solver::SolveConfig config;
  std::optional<std::map<std::string, double>> opt_out;
  State state = State::queued;
  std::string created_at, started_at, finished_at;
  std::string error;
  bool restart_marker = false;
  bool has_result = false;
  std::stop_source stop;
};

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& msg, json extra = json::object()) {
  extra["error"] = msg;
  reply(res, status, extra);
}

}  // namespace

struct Server::Impl {
  Options opts;
  fs::path jobs_dir;
  httplib::Server http;
  std::thread http_thread;

  std::map<std::string, InstanceEntry> instances;
  json excluded = json::array();
  json load_warnings = json::array();
  std::optional<std::string> store_error;

  std::mutex mu;
  std::condition_variable cv;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::deque<std::shared_ptr<Job>> queue;
  std::uint64_t next_id = 1;
  bool shutting_down = false;
  std::vector<std::jthread> workers;

  std::mutex log_mu;

  explicit Impl(Options o) : opts(std::move(o)) {
    if (opts.workers == 0) opts.workers = 1;
    jobs_dir = opts.data_dir / "jobs";
    load_store();
    replay_jobs();
    routes();
    for (std::size_t i = 0; i < opts.workers; ++i) {
      workers.emplace_back([this](std::stop_token st) { worker(st); });
    }
  }

  ~Impl() { shutdown(); }

  void shutdown() {
    {
      std::lock_guard lock(mu);
      if (shutting_down) return;
      shutting_down = true;
      for (auto& [id, job] : jobs) job->stop.request_stop();
    }
    cv.notify_all();
    http.stop();
    if (http_thread.joinable()) http_thread.join();
    for (auto& w : workers) w.request_stop();
    cv.notify_all();
    workers.clear();
  }

  // ---- instance store --------------------------------------------------

  void load_store() {
    std::error_code ec;
    fs::create_directories(jobs_dir, ec);
    if (!fs::is_directory(opts.data_dir)) {
      store_error = "data directory " + opts.data_dir.string() + " is not readable";
      return;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(opts.data_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto id = f.stem().string();
      try {
        InstanceEntry entry;
        entry.id = id;
        auto inst = std::make_shared<DistrictInstance>(load_instance(f));
        entry.baseline_d = metrics::dissimilarity(metrics::current_demographics(*inst, inst->taxonomy()));
        try {
          entry.gearys_c = metrics::district_gearys_c(*inst, inst->taxonomy());
        } catch (const Error&) {
        }
        const auto blocks = opts.data_dir / (id + ".blocks.csv");
        const auto travel = opts.data_dir / (id + ".travel.csv");
        if (fs::exists(blocks) && fs::exists(travel)) {
          try {
            entry.blocks = impact::load_block_weights(blocks, *inst);
            entry.travel = impact::load_travel_matrix(travel, *inst);
          } catch (const Error& e) {
            entry.blocks.reset();
            entry.travel.reset();
            load_warnings.push_back({{"instance", id}, {"message", std::string("travel data ignored: ") + e.what()}});
          }
        }
        for (const auto& w : inst->warnings()) load_warnings.push_back({{"instance", id}, {"message", w}});
        entry.instance = std::move(inst);
        instances.emplace(id, std::move(entry));
      } catch (const DegenerateTotalsError& e) {
        excluded.push_back({{"file", f.filename().string()}, {"kind", "degenerate_totals"}, {"error", e.what()}});
      } catch (const std::exception& e) {
        excluded.push_back({{"file", f.filename().string()}, {"kind", "invalid_instance"}, {"error", e.what()}});
      }
    }
  }

  // ---- persistence -----------------------------------------------------

  json record_of(const Job& j) const {
    json r{{"job_id", j.id},
           {"instance", j.instance_id},
           {"state", to_string(j.state)},
           {"request", j.request},
           {"config", config_to_json(j.config)},
           {"created_at", j.created_at},
           {"started_at", j.started_at.empty() ? json(nullptr) : json(j.started_at)},
           {"finished_at", j.finished_at.empty() ? json(nullptr) : json(j.finished_at)},
           {"error", j.error.empty() ? json(nullptr) : json(j.error)},
           {"restart_marker", j.restart_marker},
           {"result", j.has_result ? json("/api/v1/jobs/" + j.id + "/result") : json(nullptr)}};
    return r;
  }

  void journal(const Job& j) {
    const auto line = record_of(j).dump();
    std::lock_guard lock(log_mu);
    std::ofstream out(jobs_dir / "log.jsonl", std::ios::app);
    out << line << '\n';
  }

  fs::path result_path(const std::string& id) const { return jobs_dir / (id + ".result.json"); }

  void replay_jobs() {
    std::ifstream in(jobs_dir / "log.jsonl");
    if (!in) return;
    std::map<std::string, json> latest;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto r = json::parse(line);
        auto id = r.at("job_id").get<std::string>();
        latest[id] = std::move(r);
      } catch (const std::exception& e) {
        // A torn final write is expected after a crash; anything else is reported.
        load_warnings.push_back({{"instance", nullptr},
                                 {"message", "job log line " + std::to_string(lineno) + " unreadable: " + e.what()}});
      }
    }
    for (auto& [id, r] : latest) {
      auto job = std::make_shared<Job>();
      job->id = id;
      job->instance_id = r.value("instance", "");
      job->request = r.value("request", json::object());
      job->created_at = r.value("created_at", "");
      if (r["started_at"].is_string()) job->started_at = r["started_at"];
      if (r["finished_at"].is_string()) job->finished_at = r["finished_at"];
      if (r["error"].is_string()) job->error = r["error"];
      job->restart_marker = r.value("restart_marker", false);
      job->state = state_from(r.value("state", "")).value_or(State::failed);
      if (auto it = instances.find(job->instance_id); it != instances.end()) {
        try {
          job->config = config_from_json(r.value("config", json::object()), *it->second.instance);
        } catch (const Error&) {
        }
      }
      job->has_result = fs::exists(result_path(id));
      if (!terminal(job->state)) {
        job->state = State::failed;
        job->restart_marker = true;
        job->error = "interrupted by service restart";
        job->finished_at = now_iso();
        journal(*job);
      }
      if (const auto n = std::strtoull(id.c_str() + (id.rfind('-') == std::string::npos ? 0 : id.rfind('-') + 1),
                                       nullptr, 10);
          n >= next_id) {
        next_id = n + 1;
      }
      jobs.emplace(id, std::move(job));
    }
  }

  // ---- job execution ---------------------------------------------------

  void worker(std::stop_token st) {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return shutting_down || st.stop_requested() || !queue.empty(); });
        if (shutting_down || st.stop_requested()) return;
        job = queue.front();
        queue.pop_front();
        if (job->state != State::queued) continue;
        job->state = State::running;
        job->started_at = now_iso();
        journal(*job);
      }
      execute(*job);
    }
  }

  void execute(Job& job) {
    const auto& entry = instances.at(job.instance_id);
    const auto& inst = *entry.instance;
    State final_state = State::done;
    std::string error;
    std::optional<json> result;
    try {
      auto config = job.config;
      config.stop = job.stop.get_token();
      const auto r = solver::solve(inst, config);
      const auto taxonomy = solver::objective_of(inst, config);
      impact::AnalysisInputs in;
      if (entry.blocks && entry.travel) {
        in.blocks = &*entry.blocks;
        in.travel = &*entry.travel;
      }
      if (job.opt_out) in.opt_out_ratios = &*job.opt_out;
      json impact_json;
      try {
        impact_json = impact::report_to_json(impact::analyze(r.plan, inst, taxonomy, in), inst);
      } catch (const MissingDataError& e) {
        in.blocks = nullptr;
        in.travel = nullptr;
        impact_json = impact::report_to_json(impact::analyze(r.plan, inst, taxonomy, in), inst);
        impact_json["diagnostics"].push_back(std::string("travel skipped: ") + e.what());
      }
      result = json{{"job_id", job.id},
                    {"instance", job.instance_id},
                    {"plan", result_to_json(r, inst, config)},
                    {"impact", std::move(impact_json)}};
      if (r.stats.cancelled) final_state = State::cancelled;
    } catch (const std::exception& e) {
      final_state = State::failed;
      error = e.what();
    }
    if (result) {
      std::ofstream out(result_path(job.id));
      out << result->dump(2) << '\n';
    }
    std::lock_guard lock(mu);
    job.state = final_state;
    job.error = error;
    job.has_result = result.has_value();
    job.finished_at = now_iso();
    journal(job);
  }

  std::optional<json> load_result(const std::string& id) const {
    std::ifstream in(result_path(id));
    if (!in) return std::nullopt;
    try {
      return json::parse(in);
    } catch (const json::exception&) {
      return std::nullopt;
    }
  }

  // ---- routes ----------------------------------------------------------

  void routes() {
    const std::string api = kApi;

    http.Get(api + "/health", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu);
      reply(res, 200,
            {{"status", store_error ? "degraded" : "ok"},
             {"api_version", "v1"},
             {"instances", instances.size()},
             {"jobs", jobs.size()},
             {"workers", opts.workers}});
    });

    http.Get(api + "/districts", [this](const httplib::Request&, httplib::Response& res) {
      if (store_error) return reply_error(res, 500, *store_error);
      json out = json::array();
      for (const auto& [id, e] : instances) {
        out.push_back({{"id", id},
                       {"name", e.instance->name()},
                       {"school_count", e.instance->size()},
                       {"district_ids", e.instance->district_ids()},
                       {"baseline_d", e.baseline_d},
                       {"gearys_c", e.gearys_c ? json(*e.gearys_c) : json(nullptr)},
                       {"travel_data", e.blocks.has_value()}});
      }
      reply(res, 200, out);
    });

    http.Get(api + "/diagnostics", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu);
      reply(res, 200,
            {{"excluded", excluded},
             {"warnings", load_warnings},
             {"store_error", store_error ? json(*store_error) : json(nullptr)}});
    });

    http.Post(api + "/jobs", [this](const httplib::Request& req, httplib::Response& res) { submit(req, res); });

    http.Get(api + R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) return reply_error(res, 404, "unknown job");
      reply(res, 200, record_of(*it->second));
    });

    http.Delete(api + R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) return reply_error(res, 404, "unknown job");
      auto& job = *it->second;
      if (terminal(job.state)) {
        return reply_error(res, 409, "job already " + std::string(to_string(job.state)),
                           {{"state", to_string(job.state)}});
      }
      job.stop.request_stop();
      if (job.state == State::queued) {
        job.state = State::cancelled;
        job.finished_at = now_iso();
        journal(job);
      }
      reply(res, 202, record_of(job));
    });

    http.Get(api + R"(/jobs/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_ptr<Job> job;
      {
        std::lock_guard lock(mu);
        auto it = jobs.find(req.matches[1]);
        if (it == jobs.end()) return reply_error(res, 404, "unknown job");
        job = it->second;
        if (!job->has_result) {
          return reply_error(res, 409, "job has no result", {{"state", to_string(job->state)}});
        }
      }
      auto r = load_result(job->id);
      if (!r) return reply_error(res, 500, "result file missing or corrupt");
      reply(res, 200, *r);
    });

    http.Get(api + R"(/jobs/([^/]+)/compare)", [this](const httplib::Request& req, httplib::Response& res) {
      compare(req, res);
    });

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      reply_error(res, 500, msg);
    });
  }

  void submit(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return reply_error(res, 400, std::string("malformed JSON: ") + e.what());
    }
    if (!body.is_object() || !body.contains("instance") || !body["instance"].is_string()) {
      return reply_error(res, 400, "request must be an object with an 'instance' id");
    }
    const std::string instance_id = body["instance"];
    auto it = instances.find(instance_id);
    if (it == instances.end()) return reply_error(res, 404, "unknown instance '" + instance_id + "'");

    auto job = std::make_shared<Job>();
    job->instance_id = instance_id;
    job->request = body;
    json cfg = body;
    cfg.erase("instance");
    if (cfg.contains("opt_out_ratios")) {
      try {
        job->opt_out = cfg["opt_out_ratios"].get<std::map<std::string, double>>();
      } catch (const json::exception&) {
        return reply_error(res, 422, "opt_out_ratios must map group labels to numbers",
                           {{"constraint", "opt_out_ratios"}});
      }
      cfg.erase("opt_out_ratios");
    }
    try {
      job->config = config_from_json(cfg, *it->second.instance);
    } catch (const ConfigError& e) {
      return reply_error(res, 422, e.what(), {{"constraint", e.constraint}});
    } catch (const Error& e) {
      return reply_error(res, 422, e.what(), {{"constraint", "config"}});
    }

    std::lock_guard lock(mu);
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_id++));
    job->id = buf;
    job->created_at = now_iso();
    jobs.emplace(job->id, job);
    queue.push_back(job);
    journal(*job);
    cv.notify_one();
    reply(res, 202, {{"job_id", job->id}, {"state", "queued"}});
  }

  void compare(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("base")) return reply_error(res, 400, "missing ?base= job id");
    const std::string id = req.matches[1];
    const std::string base_id = req.get_param_value("base");
    std::shared_ptr<Job> a, b;
    {
      std::lock_guard lock(mu);
      auto ia = jobs.find(id);
      auto ib = jobs.find(base_id);
      if (ia == jobs.end() || ib == jobs.end()) return reply_error(res, 404, "unknown job");
      a = ia->second;
      b = ib->second;
      if (a->state != State::done || b->state != State::done) {
        return reply_error(res, 409, "both jobs must be done");
      }
      if (a->instance_id != b->instance_id) return reply_error(res, 409, "jobs ran on different instances");
    }
    auto ra = load_result(a->id);
    auto rb = load_result(b->id);
    if (!ra || !rb) return reply_error(res, 500, "result file missing or corrupt");

    auto metric = [](const json& v) { return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN(); };
    auto triple = [&](const json& x, const json& y) {
      const double vx = metric(x), vy = metric(y);
      json d = (std::isnan(vx) || std::isnan(vy)) ? json(nullptr) : json(vx - vy);
      return json{{"job", x}, {"base", y}, {"diff", d}};
    };
    const auto& pa = (*ra)["plan"];
    const auto& pb = (*rb)["plan"];
    const auto& ima = (*ra)["impact"];
    const auto& imb = (*rb)["impact"];
    auto delta_d = [](const json& p) { return p["d_after"].get<double>() - p["d_before"].get<double>(); };
    auto merged = [](const json& p) {
      return std::count_if(p["clusters"].begin(), p["clusters"].end(),
                           [](const json& c) { return c["members"].size() > 1; });
    };
    auto travel_delta = [](const json& im) {
      return im["travel"].is_object() ? im["travel"]["mean_delta"] : json(nullptr);
    };
    json aggregate{{"d_before", triple(pa["d_before"], pb["d_before"])},
                   {"d_after", triple(pa["d_after"], pb["d_after"])},
                   {"delta_d", triple(delta_d(pa), delta_d(pb))},
                   {"switchers", triple(ima["switchers"], imb["switchers"])},
                   {"switcher_pct", triple(100.0 * ima["switcher_share"].get<double>(),
                                           100.0 * imb["switcher_share"].get<double>())},
                   {"delta_t", triple(travel_delta(ima), travel_delta(imb))},
                   {"merged_clusters", triple(merged(pa), merged(pb))}};
    auto share = [](const json& s) {
      const double t = s["post_total"].get<double>();
      return t > 0 ? json(s["post_focal"].get<double>() / t) : json(nullptr);
    };
    json schools = json::array();
    const auto& sa = ima["schools"];
    const auto& sb = imb["schools"];
    for (std::size_t i = 0; i < sa.size() && i < sb.size(); ++i) {
      schools.push_back({{"school", sa[i]["school"]},
                         {"post_total", triple(sa[i]["post_total"], sb[i]["post_total"])},
                         {"focal_share", triple(share(sa[i]), share(sb[i]))}});
    }
    reply(res, 200,
          {{"job", id}, {"base", base_id}, {"instance", a->instance_id}, {"aggregate", aggregate}, {"schools", schools}});
  }
};

Server::Server(Options options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Server::~Server() = default;

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

void Server::run() { impl_->http.listen_after_bind(); }

int Server::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  if (bound < 0) return bound;
  impl_->http_thread = std::thread([this] { run(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::stop() { impl_->shutdown(); }

}  // namespace schoolmerge::service

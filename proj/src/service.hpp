#pragma once

// HTTP+JSON facade: district listing, asynchronous solve jobs with
// cooperative cancellation, results and side-by-side comparison.
//
// Every route is served under both /api and /api/v1. Instances are the
// *.json files at the top of the data directory (id = file stem); optional
// <id>.blocks.csv / <id>.travel.csv next to them enable travel impacts. Jobs
// are journaled to <data_dir>/jobs/log.jsonl, results to <data_dir>/jobs/<id>.result.json.

#include <filesystem>
#include <memory>
#include <string>

namespace schoolmerge::service {

struct Options {
  std::filesystem::path data_dir;
  std::size_t workers = 1;
};

class Server {
 public:
  explicit Server(Options options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void run();
  // bind + run on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace schoolmerge::service

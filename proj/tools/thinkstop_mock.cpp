// Serves a recording as a completion + embedding endpoint.

#include <csignal>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "mock_model.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mock completion endpoint replaying a recording"};
  std::string recording, host = "127.0.0.1";
  int port = 0, fail_first = 0;
  app.add_option("--recording", recording, "Recording file (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port; 0 picks a free one");
  app.add_option("--fail-first", fail_first, "Answer the first N requests with 503");
  CLI11_PARSE(app, argc, argv);

  std::ifstream in(recording);
  mock::MockModel model(nlohmann::json::parse(in));
  model.fail_first(fail_first);

  httplib::Server server;
  mock::mount(server, model);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    std::fprintf(stderr, "cannot bind %s:%d\n", host.c_str(), port);
    return 1;
  }
  std::printf("listening on http://%s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  server.listen_after_bind();
  std::fprintf(stderr, "served %llu completion and %llu embedding requests\n",
               static_cast<unsigned long long>(model.completion_requests()),
               static_cast<unsigned long long>(model.embedding_requests()));
  return 0;
}

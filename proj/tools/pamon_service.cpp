#include <pthread.h>

#include <csignal>
#include <iostream>
#include <thread>

#include "pamon/errors.hpp"
#include "pamon/server.hpp"

int main(int argc, char** argv) {
  pamon::ServiceConfig cfg;
  try {
    cfg = pamon::parse_service_config(argc, argv);
  } catch (const pamon::HelpRequested& h) {
    std::cout << h.what();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "pamon_service: " << e.what() << "\n";
    return 1;
  }

  std::signal(SIGPIPE, SIG_IGN);
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  try {
    pamon::Service service(cfg.registry.empty() ? pamon::ScenarioRegistry::builtin()
                                                : pamon::ScenarioRegistry::from_file(cfg.registry),
                           cfg.host);
    pamon::TcpServer server(service, cfg.listen);
    std::cerr << "pamon_service listening on " << cfg.listen.host << ":" << server.port()
              << std::endl;
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&stop_signals, &sig);
      server.stop();
    });
    server.run();
    // run() also returns if accept fails; make sure the waiter wakes.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  } catch (const std::exception& e) {
    std::cerr << "pamon_service: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

// ierl_demo_server: WebSocket bridge between the simulator and a browser
// client. One simulator per connection, ticking at 10 Hz wall-clock.
#include "ierl/rl/trainer.hpp"
#include "ierl/service/session.hpp"

#include <CLI11.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <iostream>
#include <thread>

using namespace ierl;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct ServerConfig {
  unsigned short port = 8765;
  std::string scenario = "left_turn";
  std::uint64_t flow_seed = 1000;
  std::string record_dir = "recordings";
  std::string mode = "demonstrate";
  std::string checkpoint;
  std::string behavior = "human";
};

/// One client. Everything runs on the connection's own thread: reads are
/// asynchronous and complete while the loop waits for the next tick, writes
/// are synchronous. Commands queue up to kQueueCap; when full, reading pauses
/// until the simulator drains it, so commands are never dropped.
class Connection {
 public:
  static constexpr std::size_t kQueueCap = 256;

  Connection(tcp::socket socket, std::string id, const ServerConfig& cfg, std::shared_ptr<const rl::PolicyCheckpoint> policy)
      : ws_(std::move(socket)), id_(std::move(id)), cfg_(cfg), policy_(std::move(policy)) {}

  void run(net::io_context& ioc) {
    try {
      ws_.accept();
      ws_.text(true);
      service::SessionConfig sc;
      sc.sim.kind = sim::scenario_from_string(cfg_.scenario);
      sc.mode = service::mode_from_string(cfg_.mode);
      sc.flow_seed = cfg_.flow_seed;
      sc.record_dir = cfg_.record_dir;
      sc.behavior = cfg_.behavior;
      sim::PolicyFn fn;
      if (policy_) fn = policy_->as_policy();
      service::Session session(id_, sc, fn);
      send(service::event_message("hello", {{"session", id_},
                                            {"mode", cfg_.mode},
                                            {"scenario", cfg_.scenario},
                                            {"flow_seed", cfg_.flow_seed},
                                            {"dt", sc.sim.dt}}));
      send(service::to_json(session.frame()));
      read_next();
      simulate(ioc, session);
    } catch (const std::exception& e) {
      std::cerr << "[" << id_ << "] " << e.what() << std::endl;
    }
    std::cerr << "[" << id_ << "] closed" << std::endl;
  }

 private:
  void simulate(net::io_context& ioc, service::Session& session) {
    const auto period = std::chrono::milliseconds(static_cast<int>(std::lround(1000.0 * session.env().config().dt)));
    auto next = std::chrono::steady_clock::now();
    while (!closed_) {
      const bool was_full = queue_.size() >= kQueueCap;
      while (!queue_.empty()) {
        const service::Command c = queue_.front();
        queue_.pop_front();
        for (const auto& ev : session.command(c)) send(ev);
      }
      if (was_full && !closed_) read_next();
      if (!session.env().done()) {
        const auto out = session.tick();
        send(service::to_json(out.frame));
        for (const auto& ev : out.events) send(ev);
      }
      next += period;
      ioc.restart();
      ioc.run_until(next);
      std::this_thread::sleep_until(next);
      // a long stall does not turn into a burst of catch-up ticks
      if (std::chrono::steady_clock::now() > next + period) next = std::chrono::steady_clock::now();
    }
  }

  void read_next() {
    ws_.async_read(buf_, [this](beast::error_code ec, std::size_t) {
      if (ec) {
        closed_ = true;
        return;
      }
      const std::string text = beast::buffers_to_string(buf_.data());
      buf_.consume(buf_.size());
      const auto parsed = service::parse_client_message(text);
      if (const auto* err = std::get_if<std::string>(&parsed))
        send(service::error_message(*err));
      else
        queue_.push_back(std::get<service::Command>(parsed));
      if (queue_.size() < kQueueCap) read_next();
    });
  }

  void send(const nlohmann::json& msg) {
    if (closed_) return;
    beast::error_code ec;
    ws_.write(net::buffer(msg.dump()), ec);
    if (ec) closed_ = true;
  }

  websocket::stream<tcp::socket> ws_;
  std::string id_;
  const ServerConfig& cfg_;
  std::shared_ptr<const rl::PolicyCheckpoint> policy_;
  beast::flat_buffer buf_;
  std::deque<service::Command> queue_;
  bool closed_ = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WebSocket demonstration server"};
  ServerConfig cfg;
  app.add_option("--port", cfg.port)->capture_default_str();
  app.add_option("--scenario", cfg.scenario, "left_turn | roundabout")->capture_default_str();
  app.add_option("--flow-seed", cfg.flow_seed)->capture_default_str();
  app.add_option("--record-dir", cfg.record_dir)->capture_default_str();
  app.add_option("--mode", cfg.mode, "demonstrate | spectate | replay")->capture_default_str();
  app.add_option("--checkpoint", cfg.checkpoint, "trained checkpoint directory (replay mode)");
  app.add_option("--behavior", cfg.behavior, "label stored in recorded demonstrations")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    sim::scenario_from_string(cfg.scenario);
    const auto mode = service::mode_from_string(cfg.mode);
    std::shared_ptr<const rl::PolicyCheckpoint> policy;
    if (mode == service::Mode::Replay) {
      if (cfg.checkpoint.empty()) throw std::invalid_argument("replay mode needs --checkpoint");
      policy = std::make_shared<rl::PolicyCheckpoint>(rl::load_policy(cfg.checkpoint));
    }
    net::io_context ioc;
    tcp::acceptor acceptor(ioc, {tcp::v4(), cfg.port});
    std::cerr << "listening on ws://0.0.0.0:" << acceptor.local_endpoint().port() << " (" << cfg.mode << ", "
              << cfg.scenario << ", flow " << cfg.flow_seed << ")" << std::endl;
    for (int n = 1;; ++n) {
      auto conn_ioc = std::make_shared<net::io_context>();
      tcp::socket socket = acceptor.accept(*conn_ioc);
      std::thread([conn_ioc, s = std::move(socket), n, &cfg, policy]() mutable {
        Connection(std::move(s), "s" + std::to_string(n), cfg, policy).run(*conn_ioc);
      }).detach();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "streamsfm/packet.hpp"

namespace streamsfm {

// Bounded multi-producer single-consumer queue between ingest threads and the
// engine loop. Push blocks when full, which delays the sender's ack and gives
// the protocol its backpressure.
class PacketQueue {
 public:
  explicit PacketQueue(size_t capacity = 64) : capacity_(capacity) {}

  void Push(FramePacket packet);
  // Blocks until a packet arrives or the queue is closed and drained.
  std::optional<FramePacket> Pop();
  void Close();
  bool Closed() const;
  size_t Size() const;

 private:
  const size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_full_, not_empty_;
  std::deque<FramePacket> queue_;
  bool closed_ = false;
};

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  uint16_t port = 0;  // 0 picks an ephemeral port
  size_t queue_capacity = 64;
};

// Accepts agent connections, decodes framed messages, acknowledges each with
// a one-byte status and feeds frames to the queue in arrival order. The
// queue is closed once at least one agent connected and all have gone away.
class WireServer {
 public:
  WireServer(ServerOptions options, PacketQueue* queue);
  ~WireServer();

  void Start();  // throws std::runtime_error if the address cannot be bound
  void Stop();
  // Blocks until every connection has closed (after at least one connected).
  void WaitUntilIdle();
  uint16_t Port() const { return port_; }
  size_t ConnectionsSeen() const { return connections_seen_.load(); }

 private:
  void AcceptLoop();
  void HandleConnection(int fd);

  ServerOptions options_;
  PacketQueue* queue_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<size_t> connections_seen_{0};
  std::atomic<size_t> connections_open_{0};
  std::thread accept_thread_;
  std::mutex clients_mutex_;
  std::vector<std::thread> client_threads_;
  std::condition_variable idle_cv_;
  std::mutex idle_mutex_;
};

}  // namespace streamsfm

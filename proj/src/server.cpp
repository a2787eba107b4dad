#include "streamsfm/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>

#include "streamsfm/wire.hpp"

namespace streamsfm {

void PacketQueue::Push(FramePacket packet) {
  std::unique_lock<std::mutex> lock(mutex_);
  not_full_.wait(lock, [&] { return queue_.size() < capacity_ || closed_; });
  if (closed_) return;
  queue_.push_back(std::move(packet));
  not_empty_.notify_one();
}

std::optional<FramePacket> PacketQueue::Pop() {
  std::unique_lock<std::mutex> lock(mutex_);
  not_empty_.wait(lock, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  FramePacket packet = std::move(queue_.front());
  queue_.pop_front();
  not_full_.notify_one();
  return packet;
}

void PacketQueue::Close() {
  std::lock_guard<std::mutex> lock(mutex_);
  closed_ = true;
  not_empty_.notify_all();
  not_full_.notify_all();
}

bool PacketQueue::Closed() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return closed_;
}

size_t PacketQueue::Size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return queue_.size();
}

// ---------------------------------------------------------------------------

namespace {

bool ReadExactly(int fd, void* data, size_t n) {
  uint8_t* bytes = static_cast<uint8_t*>(data);
  size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, bytes + got, n - got, 0);
    if (r <= 0) return false;
    got += static_cast<size_t>(r);
  }
  return true;
}

bool WriteExactly(int fd, const void* data, size_t n) {
  const uint8_t* bytes = static_cast<const uint8_t*>(data);
  size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, bytes + sent, n - sent, MSG_NOSIGNAL);
    if (r <= 0) return false;
    sent += static_cast<size_t>(r);
  }
  return true;
}

void SendStatus(int fd, WireStatus status) {
  const uint8_t byte = static_cast<uint8_t>(status);
  WriteExactly(fd, &byte, 1);
}

}  // namespace

WireServer::WireServer(ServerOptions options, PacketQueue* queue)
    : options_(std::move(options)), queue_(queue) {}

WireServer::~WireServer() { Stop(); }

void WireServer::Start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw std::runtime_error("bad bind address: " + options_.bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot bind " + options_.bind_address + ":" +
                             std::to_string(options_.port));
  }
  if (::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("listen() failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_ = true;
  accept_thread_ = std::thread([this] { AcceptLoop(); });
}

void WireServer::Stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard<std::mutex> lock(clients_mutex_);
  for (std::thread& t : client_threads_) {
    if (t.joinable()) t.join();
  }
  client_threads_.clear();
}

void WireServer::WaitUntilIdle() {
  std::unique_lock<std::mutex> lock(idle_mutex_);
  idle_cv_.wait(lock, [&] {
    return connections_seen_.load() > 0 && connections_open_.load() == 0;
  });
}

void WireServer::AcceptLoop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    ++connections_seen_;
    ++connections_open_;
    std::lock_guard<std::mutex> lock(clients_mutex_);
    client_threads_.emplace_back([this, fd] {
      HandleConnection(fd);
      ::close(fd);
      --connections_open_;
      idle_cv_.notify_all();
    });
  }
}

void WireServer::HandleConnection(int fd) {
  while (running_) {
    uint8_t header[10];
    if (!ReadExactly(fd, header, sizeof(header))) return;  // peer gone
    if (std::memcmp(header, kWireMagic, 4) != 0) {
      SendStatus(fd, WireStatus::kMalformed);
      return;  // drop the connection on framing errors
    }
    if (header[4] != kWireVersion) {
      SendStatus(fd, WireStatus::kBadVersion);
      return;
    }
    const uint8_t type = header[5];
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(header[6 + i]) << (8 * i);
    if (len > (64u << 20)) {
      SendStatus(fd, WireStatus::kMalformed);
      return;
    }
    std::vector<uint8_t> payload(len);
    if (len > 0 && !ReadExactly(fd, payload.data(), len)) return;

    switch (static_cast<WireType>(type)) {
      case WireType::kHello:
        SendStatus(fd, payload.size() == 4 ? WireStatus::kOk : WireStatus::kMalformed);
        if (payload.size() != 4) return;
        break;
      case WireType::kFrame: {
        FramePacket packet;
        try {
          packet = DecodePacketPayload(payload);
        } catch (const std::exception&) {
          SendStatus(fd, WireStatus::kMalformed);
          return;
        }
        // Enqueue before acknowledging: a full queue delays the ack and
        // throttles the agent.
        queue_->Push(std::move(packet));
        SendStatus(fd, WireStatus::kOk);
        break;
      }
      case WireType::kBye:
        SendStatus(fd, WireStatus::kOk);
        return;
      default:
        SendStatus(fd, WireStatus::kUnknownType);
        return;
    }
  }
}

}  // namespace streamsfm

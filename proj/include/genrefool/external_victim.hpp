#pragma once

// Client side of the line-delimited JSON victim protocol. The child is
// started through /bin/sh -c and talks over a socket bound to its stdin and
// stdout:
//
//   child  -> parent  {"type":"hello","labels":[...]}
//   parent -> child   {"type":"predict","id":N,"texts":[...]}
//   child  -> parent  {"type":"probs","id":N,"probs":[[...],...]}
//   parent -> child   {"type":"shutdown"}, then EOF on stdin
//
// A child may also answer {"type":"error","id":N,"message":...}.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "genrefool/error.hpp"
#include "genrefool/victim.hpp"

namespace genrefool {

struct ExternalVictimSpec {
  std::string command;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_batch = 64;
  // When set, the handshake labels must equal this set (order may differ).
  std::optional<std::vector<std::string>> expected_labels;
};

namespace detail {

class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw VictimError(std::string("socketpair failed: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw VictimError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      // Own process group, so the shell and whatever it spawns go together.
      ::setpgid(0, 0);
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(sv[1]);
    fd_ = sv[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { terminate(std::chrono::milliseconds(1000)); }

  void write_line(const std::string& line) {
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = ::send(fd_, p, left, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw VictimError("victim process closed its input");
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw VictimError("timed out waiting for victim reply", buffer_);
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw VictimError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw VictimError("victim process exited", buffer_);
      }
      if (n == 0) throw VictimError("victim process exited", buffer_);
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  // Closes our end of stdin and reaps the child, killing it after `grace`.
  void terminate(std::chrono::milliseconds grace) noexcept {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
    }
    if (pid_ > 0) {
      const auto deadline = std::chrono::steady_clock::now() + grace;
      int status = 0;
      while (::waitpid(pid_, &status, WNOHANG) == 0) {
        if (std::chrono::steady_clock::now() >= deadline) {
          ::kill(-pid_, SIGKILL);
          ::waitpid(pid_, &status, 0);
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      ::kill(-pid_, SIGKILL);  // stragglers left by the shell
      pid_ = -1;
    }
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  pid_t pid() const noexcept { return pid_; }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace detail

// Proxy for a victim living in a child process. Requests are serialized
// internally, so concurrent callers simply queue.
class ExternalVictim final : public VictimModel {
 public:
  explicit ExternalVictim(ExternalVictimSpec spec) : spec_(std::move(spec)), child_(spec_.command) {
    if (spec_.max_batch == 0) spec_.max_batch = 1;
    const std::string line = child_.read_line(spec_.timeout);
    nlohmann::json hello;
    try {
      hello = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw VictimError("malformed hello line", line);
    }
    if (!hello.is_object() || hello.value("type", "") != "hello" || !hello.contains("labels") ||
        !hello["labels"].is_array())
      throw VictimError("expected a hello line with labels", line);
    child_labels_ = hello["labels"].get<std::vector<std::string>>();

    if (spec_.expected_labels) {
      const std::set<std::string> want(spec_.expected_labels->begin(), spec_.expected_labels->end());
      const std::set<std::string> got(child_labels_.begin(), child_labels_.end());
      if (want != got || child_labels_.size() != got.size()) {
        auto join = [](const auto& v) {
          std::string s;
          for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
          return s;
        };
        throw VictimError("label mismatch: victim declares {" + join(child_labels_) + "} but corpus has {" +
                          join(*spec_.expected_labels) + "}");
      }
      labels_ = *spec_.expected_labels;
    } else {
      labels_ = child_labels_;
    }
    for (const auto& l : labels_)
      for (std::size_t c = 0; c < child_labels_.size(); ++c)
        if (child_labels_[c] == l) column_.push_back(c);
  }

  ~ExternalVictim() override {
    std::lock_guard lock(mutex_);
    try {
      child_.write_line(R"({"type":"shutdown"})");
    } catch (const VictimError&) {
    }
    child_.terminate(std::chrono::milliseconds(1000));
  }

  const std::vector<std::string>& labels() const override { return labels_; }

  std::vector<ProbRow> predict_proba(std::span<const std::string> texts) const override {
    std::vector<ProbRow> out;
    out.reserve(texts.size());
    std::lock_guard lock(mutex_);
    for (std::size_t b = 0; b < texts.size(); b += spec_.max_batch) {
      const auto chunk = texts.subspan(b, std::min(spec_.max_batch, texts.size() - b));
      request(chunk, out);
    }
    return out;
  }

  // Also the process group id of the victim command.
  pid_t pid() const noexcept { return child_.pid(); }

 private:
  void request(std::span<const std::string> texts, std::vector<ProbRow>& out) const {
    const long long id = next_id_++;
    nlohmann::json req = {{"type", "predict"}, {"id", id}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    child_.write_line(req.dump());
    for (;;) {
      const std::string line = child_.read_line(spec_.timeout);
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        throw VictimError("malformed reply", line);
      }
      if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer())
        throw VictimError("reply without id", line);
      if (reply["id"].get<long long>() != id) continue;  // stale reply from an earlier, failed request
      const std::string type = reply.value("type", "");
      if (type == "error") throw VictimError("victim reported an error", line);
      if (type != "probs" || !reply.contains("probs") || !reply["probs"].is_array())
        throw VictimError("expected a probs reply", line);
      const auto& rows = reply["probs"];
      if (rows.size() != texts.size()) throw VictimError("reply row count differs from request", line);
      for (const auto& r : rows) {
        if (!r.is_array() || r.size() != child_labels_.size()) throw VictimError("bad probability row", line);
        ProbRow p;
        p.reserve(column_.size());
        for (auto c : column_) {
          if (!r[c].is_number()) throw VictimError("non-numeric probability", line);
          p.push_back(r[c].get<double>());
        }
        if (!is_distribution(p)) throw VictimError("probability row is not a distribution", line);
        out.push_back(std::move(p));
      }
      return;
    }
  }

  ExternalVictimSpec spec_;
  mutable detail::ChildProcess child_;
  std::vector<std::string> child_labels_;
  std::vector<std::string> labels_;
  std::vector<std::size_t> column_;
  mutable std::mutex mutex_;
  mutable long long next_id_ = 0;
};

inline std::unique_ptr<VictimModel> launch_external(ExternalVictimSpec spec) {
  return std::make_unique<ExternalVictim>(std::move(spec));
}

}  // namespace genrefool

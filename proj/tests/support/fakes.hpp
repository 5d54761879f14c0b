#pragma once

#include <unistd.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"

namespace llmrec::oracle {

/// Replays canned completions in order, repeating the last one when exhausted.
class ScriptedClient : public LlmClient {
 public:
  explicit ScriptedClient(std::vector<std::string> replies) : replies_(replies.begin(), replies.end()) {}

  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (replies_.empty()) return {};
    std::string reply = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return reply;
  }
  LlmMode mode() const override { return LlmMode::Mock; }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> replies_;
  std::vector<ChatRequest> requests_;
};

/// Delegates to a callable; handy for failure injection.
class FunctionClient : public LlmClient {
 public:
  explicit FunctionClient(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }
  LlmMode mode() const override { return LlmMode::Mock; }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

/// Per-test scratch directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("llmrec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace llmrec::oracle

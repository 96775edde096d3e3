#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patchnet/diff.hpp"
#include "patchnet/error.hpp"
#include "patchnet/util.hpp"

namespace patchnet::corpus {

struct RawCommit {
  std::string id;  // 40-hex sha
  std::optional<int> label;
  std::string message;
  std::string diff;
  // path -> (parent version, commit version); missing side is empty
  std::map<std::string, std::pair<std::string, std::string>> file_contents;
};

// Raised for a single commit; extraction of the remaining commits continues.
class CommitError : public Error {
public:
  using Error::Error;
};

namespace detail {

struct CommandResult {
  int status = -1;  // process exit code, or -1 for abnormal termination
  std::string output;
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult res;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) fail("failed to spawn: " + cmd);
  char buf[4096];
  std::size_t n;
  while ((n = ::fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
  const int rc = ::pclose(pipe);
  res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return res;
}

}  // namespace detail

inline bool is_full_sha(const std::string& s) {
  if (s.size() != 40) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

// Read-only view of a git repository, shelling out to the git binary.
// User and system git config are suppressed so output is reproducible.
class GitRepo {
public:
  explicit GitRepo(std::string path) : path_(std::move(path)) {
    auto res = run({"rev-parse", "--git-dir"});
    if (res.status != 0) fail("not a readable git repository: " + path_);
  }

  const std::string& path() const { return path_; }

  bool has_commit(const std::string& sha) const {
    return run({"rev-parse", "--verify", "--quiet", sha + "^{commit}"}).status == 0;
  }

  std::string commit_message(const std::string& sha) const {
    auto res = run({"log", "-1", "--format=%B", sha});
    if (res.status != 0) throw CommitError("cannot read message of " + sha);
    return res.output;
  }

  // Unified diff against the first parent (empty tree for a root commit).
  std::string commit_diff(const std::string& sha) const {
    auto res = run({"show", "--format=", "--no-color", "--no-renames",
                    "--no-ext-diff", "--unified=3", "--first-parent", sha});
    if (res.status != 0) throw CommitError("cannot read diff of " + sha);
    return res.output;
  }

  // Contents of path at revision, or empty when absent (new/deleted files).
  std::string file_at(const std::string& rev, const std::string& file) const {
    auto res = run({"show", rev + ":" + file});
    return res.status == 0 ? res.output : std::string();
  }

  RawCommit read_commit(const std::string& sha,
                        std::optional<int> label = std::nullopt) const {
    if (!has_commit(sha)) throw CommitError("commit not found: " + sha);
    RawCommit out;
    out.id = sha;
    out.label = label;
    out.message = commit_message(sha);
    out.diff = commit_diff(sha);
    for (const auto& file : parse_unified_diff(out.diff)) {
      if (file.is_binary) continue;
      out.file_contents[file.path] = {
          file.is_new ? std::string() : file_at(sha + "^", file.path),
          file.is_deleted ? std::string() : file_at(sha, file.path)};
    }
    return out;
  }

private:
  detail::CommandResult run(const std::vector<std::string>& args) const {
    std::string cmd =
        "env GIT_CONFIG_GLOBAL=/dev/null GIT_CONFIG_SYSTEM=/dev/null "
        "GIT_PAGER=cat git -C " +
        util::shell_quote(path_);
    for (const auto& a : args) cmd += " " + util::shell_quote(a);
    cmd += " 2>/dev/null";
    return detail::run_command(cmd);
  }

  std::string path_;
};

}  // namespace patchnet::corpus

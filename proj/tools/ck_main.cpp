#include <sys/stat.h>
#include <unistd.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ck/cli.hpp"
#include "ck/util.hpp"

namespace {

// Structured input is consumed only from an actual pipe or a redirected
// file. Ttys and inherited session descriptors (sockets, /dev/null) are
// left alone so plain invocations never block on stdin.
bool stdin_is_piped() {
  if (::isatty(0)) return false;
  struct stat st{};
  if (::fstat(0, &st) != 0) return false;
  return S_ISFIFO(st.st_mode) || S_ISREG(st.st_mode);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  std::optional<ck::Json> stdin_json;
  if (stdin_is_piped()) {
    std::string text((std::istreambuf_iterator<char>(std::cin)),
                     std::istreambuf_iterator<char>());
    auto non_space = text.find_first_not_of(" \t\r\n");
    if (non_space != std::string::npos) {
      try {
        stdin_json = ck::Json::parse(text);
      } catch (const ck::Json::parse_error& e) {
        ck::cli::ResponseEnvelope envelope;
        envelope.return_code = 2;
        envelope.error = std::string("stdin is not valid JSON: ") + e.what();
        std::cout << ck::canonical_dump(envelope.to_json());
        return envelope.exit_code();
      }
    }
  }

  ck::cli::ResponseEnvelope envelope = ck::cli::dispatch(args, stdin_json);
  std::cout << ck::canonical_dump(envelope.to_json());
  return envelope.exit_code();
}

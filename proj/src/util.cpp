#include "gridcarbon/util.hpp"

#include <fstream>
#include <sstream>

#include "gridcarbon/error.hpp"

namespace gridcarbon {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::Io, "cannot open file: " + path.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      fail(ErrorKind::Io, "cannot write file: " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      fail(ErrorKind::Io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    fail(ErrorKind::Io, "rename failed for " + path.string() + ": " + ec.message());
  }
}

}  // namespace gridcarbon

#include "netadapt/detail/io.hpp"

#include <sys/utsname.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace netadapt::detail {

std::string hex_double(double v) {
  std::array<char, 48> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                               std::chars_format::hex);
  if (ec != std::errc{}) throw Error("hex_double: encoding failed");
  return std::string(buf.data(), p);
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v,
                                 std::chars_format::hex);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw FormatError(0, "bad hexfloat value '" + s + "'");
  }
  return v;
}

std::string dec_double(double v) {
  std::array<char, 48> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("dec_double: encoding failed");
  return std::string(buf.data(), p);
}

double parse_dec_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw FormatError(0, "bad decimal value '" + s + "'");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error("rename " + tmp.string() + " -> " + path.string() +
                " failed: " + ec.message());
  }
}

std::string host_descriptor() {
  utsname u{};
  if (uname(&u) != 0) return "unknown-host";
  std::ostringstream ss;
  ss << u.sysname << " " << u.release << " " << u.machine << " hw_threads="
     << std::thread::hardware_concurrency();
  return ss.str();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace netadapt::detail

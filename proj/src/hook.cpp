// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "osd/sweep.hpp"

namespace osd {

double proxy_error(const LayerSet& deltas, const LayerSet& reconstructed,
                   const std::vector<ImportanceMap>& importance) {
  if (deltas.size() != reconstructed.size() || (!importance.empty() && importance.size() != deltas.size()))
    throw StructuralError("proxy_error: layer counts differ");
  double total = 0.0;
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    const auto& a = deltas[l].matrix;
    const auto& b = reconstructed[l].matrix;
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw StructuralError("proxy_error: shape mismatch in layer '" + deltas[l].id + "'");
    const Eigen::ArrayXXd diff = (a.cast<double>() - b.cast<double>()).cwiseAbs().array();
    if (importance.empty()) {
      total += diff.sum();
    } else {
      const auto& z = importance[l].matrix();
      if (z.rows() != a.rows() || z.cols() != a.cols())
        throw StructuralError("proxy_error: importance shape mismatch in layer '" + deltas[l].id + "'");
      total += (diff * z.cast<double>().array()).sum();
    }
  }
  return total;
}

double ProxyHook::score(const LayerSet& reconstructed_deltas) const {
  return -proxy_error(deltas_, reconstructed_deltas, importance_);
}

double parse_score(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || errno == ERANGE || !std::isfinite(v))
    throw EvaluationError("hook output is not a decimal score: '" + text + "'", 0);
  for (const char* p = end; *p; ++p)
    if (!std::isspace(static_cast<unsigned char>(*p)))
      throw EvaluationError("hook output has trailing text after the score: '" + text + "'", 0);
  return v;
}

ExternalHook::ExternalHook(std::string command_template, std::optional<LayerSet> pretrained,
                           std::filesystem::path temp_dir)
    : template_(std::move(command_template)), pretrained_(std::move(pretrained)), temp_dir_(std::move(temp_dir)) {
  if (template_.empty()) throw ArgumentError("hook command template is empty");
}

std::string ExternalHook::command_for(const std::filesystem::path& candidate) const {
  std::string quoted = "'";
  for (char ch : candidate.string()) quoted += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  quoted += "'";

  std::string cmd;
  bool substituted = false;
  for (std::size_t i = 0; i < template_.size(); ++i) {
    if (template_.compare(i, 2, "{}") == 0) {
      cmd += quoted;
      substituted = true;
      ++i;
    } else {
      cmd += template_[i];
    }
  }
  if (!substituted) cmd += " " + quoted;
  return cmd;
}

double ExternalHook::score(const LayerSet& reconstructed_deltas) const {
  static std::atomic<unsigned> counter{0};
  const auto path = temp_dir_ / ("osd-candidate-" + std::to_string(::getpid()) + "-" +
                                 std::to_string(counter.fetch_add(1)) + ".sdt");
  save_layer_set(path, pretrained_ ? add(*pretrained_, reconstructed_deltas) : reconstructed_deltas);

  const std::string cmd = command_for(path);
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    std::filesystem::remove(path);
    throw EvaluationError("cannot start hook command: " + cmd, 0);
  }
  std::string out;
  char buf[512];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int status = ::pclose(pipe);
  std::error_code ec;
  std::filesystem::remove(path, ec);

  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw EvaluationError("hook command failed (status " + std::to_string(status) + "): " + cmd, 0);
  return parse_score(out);
}

}  // namespace osd

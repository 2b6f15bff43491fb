#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "specbreak/breaktest.hpp"

namespace specbreak {

// Disk- and memory-backed store of simulated limit tables, keyed by the full
// spec (family, d, delta, G, R, seed). Corrupt or mismatched files are
// recomputed and rewritten.
class QuantileStore {
 public:
  // Empty directory disables disk persistence.
  explicit QuantileStore(std::string directory = "", int threads = 0)
      : dir_(std::move(directory)), threads_(threads) {}

  std::shared_ptr<const LimitTable> get(const LimitDistSpec& spec, bool* from_cache = nullptr) {
    const std::string key = spec.key();
    if (auto it = memo_.find(key); it != memo_.end()) {
      if (from_cache) *from_cache = true;
      return it->second;
    }
    if (!dir_.empty()) {
      if (auto table = load(spec, key)) {
        if (from_cache) *from_cache = true;
        memo_[key] = table;
        return table;
      }
    }
    if (from_cache) *from_cache = false;
    auto table = std::make_shared<LimitTable>(make_limit_table(spec, threads_));
    memo_[key] = table;
    if (!dir_.empty()) save(*table, key);
    return table;
  }

 private:
  static std::string sanitize(const std::string& key) {
    std::string out = key;
    for (char& c : out)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
    return out;
  }

  std::filesystem::path file_for(const std::string& key) const {
    return std::filesystem::path(dir_) / (sanitize(key) + ".qtab");
  }

  std::shared_ptr<LimitTable> load(const LimitDistSpec& spec, const std::string& key) const {
    std::ifstream in(file_for(key));
    if (!in) return nullptr;
    std::string magic, stored_key;
    if (!std::getline(in, magic) || magic != "specbreak-quantile-table v1") return nullptr;
    if (!std::getline(in, stored_key) || stored_key != key) return nullptr;
    std::size_t count = 0;
    if (!(in >> count) || count != static_cast<std::size_t>(spec.replications)) return nullptr;
    auto table = std::make_shared<LimitTable>();
    table->spec = spec;
    table->sorted.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      if (!(in >> table->sorted[i]) || !std::isfinite(table->sorted[i])) return nullptr;
    if (!std::is_sorted(table->sorted.begin(), table->sorted.end())) return nullptr;
    return table;
  }

  void save(const LimitTable& table, const std::string& key) const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    std::ofstream out(file_for(key));
    if (!out) return;  // caching is best effort
    out << "specbreak-quantile-table v1\n" << key << "\n" << table.sorted.size() << "\n";
    out.precision(17);
    for (double v : table.sorted) out << v << "\n";
  }

  std::string dir_;
  int threads_;
  std::map<std::string, std::shared_ptr<const LimitTable>> memo_;
};

}  // namespace specbreak

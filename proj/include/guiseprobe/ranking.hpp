#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace guiseprobe {

// Tokens ordered by descending score; ties broken by ascending token.
struct Ranking {
  std::vector<std::string> order;

  static Ranking FromScores(const std::map<std::string, double, std::less<>>& scores);

  // 1-based rank, or nullopt when absent.
  std::optional<std::size_t> RankOf(std::string_view token) const;
  std::vector<std::string> Top(std::size_t n) const;
  std::size_t size() const { return order.size(); }
};

}  // namespace guiseprobe

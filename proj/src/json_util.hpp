#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "seqsprt/error.hpp"

namespace seqsprt::detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& ctx)
{
  if (!j.is_object())
    throw ConfigError(ctx + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(ctx + ": unknown key '" + key + "'");
}

/// Reads j[key] into out when present; type mismatches become ConfigError.
template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& ctx)
{
  if (!j.contains(key))
    return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(ctx + "." + key + ": " + e.what());
  }
}

} // namespace seqsprt::detail

#include "adp/hvts.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

namespace adp {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::string remove_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out.push_back(c);
      continue;
    }
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

json parse_array(std::string_view text) {
  const auto clean = sanitize_json(text);
  if (!clean) throw HvtsError(clean.error);
  json j = json::parse(clean.json, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw HvtsError("response is not valid JSON");
  if (!j.is_array()) throw HvtsError("response is not a JSON array");
  return j;
}

const std::string& require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw HvtsError(std::string("missing string field \"") + key + "\"");
  }
  return it->get_ref<const std::string&>();
}

int require_int(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw HvtsError(std::string("missing field \"") + key + "\"");
  }
  if (it->is_number_integer()) return it->get<int>();
  if (it->is_number_float()) {
    const double v = it->get<double>();
    if (std::isfinite(v) && v == std::round(v)) return static_cast<int>(v);
  }
  if (it->is_string()) {
    const auto s = trim(it->get_ref<const std::string&>());
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && p == s.data() + s.size()) return v;
  }
  throw HvtsError(std::string("field \"") + key + "\" is not an integer");
}

}  // namespace

std::optional<std::size_t> ScheduleTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return i;
  }
  return std::nullopt;
}

SanitizeResult sanitize_json(std::string_view raw) {
  const auto open = raw.find('[');
  const auto close = raw.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    return {"", "no bracketed JSON array found"};
  }
  // Fences and prose sit outside the outermost brackets and are cut here.
  return {remove_trailing_commas(raw.substr(open, close - open + 1)), ""};
}

std::string normalize_stage_name(std::string_view name) {
  std::string out(trim(name));
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

std::vector<StageTemplate> parse_stage_templates(std::string_view text,
                                                 int expected_n) {
  const json arr = parse_array(text);
  if (static_cast<int>(arr.size()) != expected_n) {
    throw HvtsError("expected " + std::to_string(expected_n) + " stages, got " +
                    std::to_string(arr.size()));
  }
  std::vector<StageTemplate> out;
  std::set<std::string> seen;
  for (const auto& item : arr) {
    if (!item.is_object()) throw HvtsError("stage entry is not an object");
    StageTemplate st;
    st.name = normalize_stage_name(require_string(item, "name"));
    st.description = require_string(item, "description");
    if (st.name.empty()) throw HvtsError("stage name is empty");
    if (st.name.find_first_of("\t\n\r") != std::string::npos) {
      throw HvtsError("stage name contains whitespace: " + st.name);
    }
    if (!seen.insert(st.name).second) {
      throw HvtsError("duplicate stage name: " + st.name);
    }
    if (st.description.rfind("Action features:", 0) != 0) {
      st.description = "Action features: " + st.description;
    }
    out.push_back(std::move(st));
  }
  return out;
}

bool has_hardest_entry(const ScheduleTable& table) {
  return std::any_of(table.entries.begin(), table.entries.end(),
                     [&](const ScheduleEntry& e) {
                       return e.n_action_steps == table.ranges.a_min &&
                              e.num_inference_steps == table.ranges.i_max;
                     });
}

ScheduleTable parse_schedule(std::string_view text,
                             std::span<const StageTemplate> stages,
                             const ScheduleRanges& ranges) {
  if (ranges.a_min > ranges.a_max || ranges.i_min > ranges.i_max) {
    throw HvtsError("invalid schedule ranges");
  }
  const json arr = parse_array(text);
  std::vector<std::optional<ScheduleEntry>> by_stage(stages.size());
  for (const auto& item : arr) {
    if (!item.is_object()) throw HvtsError("schedule entry is not an object");
    const std::string name = normalize_stage_name(require_string(item, "name"));
    const auto it = std::find_if(stages.begin(), stages.end(),
                                 [&](const auto& s) { return s.name == name; });
    if (it == stages.end()) throw HvtsError("unknown stage in schedule: " + name);
    auto& slot = by_stage[static_cast<std::size_t>(it - stages.begin())];
    if (slot) throw HvtsError("stage scheduled twice: " + name);
    slot = ScheduleEntry{
        name,
        std::clamp(require_int(item, "n_action_steps"), ranges.a_min,
                   ranges.a_max),
        std::clamp(require_int(item, "num_inference_steps"), ranges.i_min,
                   ranges.i_max)};
  }
  ScheduleTable table;
  table.ranges = ranges;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!by_stage[i]) {
      throw HvtsError("schedule is missing stage " + stages[i].name);
    }
    table.entries.push_back(*by_stage[i]);
  }
  if (!table.entries.empty() && !has_hardest_entry(table)) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.entries.size(); ++i) {
      const auto& e = table.entries[i];
      const auto& b = table.entries[best];
      if (e.num_inference_steps > b.num_inference_steps ||
          (e.num_inference_steps == b.num_inference_steps &&
           e.n_action_steps < b.n_action_steps)) {
        best = i;
      }
    }
    table.entries[best].n_action_steps = ranges.a_min;
    table.entries[best].num_inference_steps = ranges.i_max;
  }
  return table;
}

StageBelief parse_stage_probs(std::string_view text,
                              std::span<const StageTemplate> stages, int top_k,
                              std::vector<std::string>* warnings) {
  if (top_k < 1) throw HvtsError("top_k must be >= 1");
  StageBelief belief;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = trim(text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.starts_with("```")) continue;
    if (line.starts_with("- ") || line.starts_with("* ")) line.remove_prefix(2);
    const auto colon = line.rfind(':');
    if (colon == std::string_view::npos) {
      if (warnings) warnings->push_back("ignored line: " + std::string(line));
      continue;
    }
    const std::string name = normalize_stage_name(line.substr(0, colon));
    std::string_view num = trim(line.substr(colon + 1));
    double scale = 1.0;
    if (num.ends_with('%')) {
      num.remove_suffix(1);
      scale = 0.01;
    }
    double p = 0.0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), p);
    if (ec != std::errc() || end != num.data() + num.size() || !(p >= 0.0)) {
      if (warnings) warnings->push_back("bad probability: " + std::string(line));
      continue;
    }
    p = std::min(1.0, p * scale);
    const auto it = std::find_if(stages.begin(), stages.end(),
                                 [&](const auto& s) { return s.name == name; });
    if (it == stages.end()) {
      if (warnings) warnings->push_back("unknown stage: " + name);
      continue;
    }
    const auto idx = static_cast<std::size_t>(it - stages.begin());
    auto dup = std::find_if(belief.begin(), belief.end(),
                            [&](const StageProb& sp) { return sp.stage == idx; });
    if (dup != belief.end()) {
      dup->prob = std::max(dup->prob, p);
    } else {
      belief.push_back({idx, p});
    }
  }
  if (belief.empty()) throw HvtsError("no recognised stages in response");
  std::stable_sort(belief.begin(), belief.end(),
                   [](const StageProb& a, const StageProb& b) {
                     return a.prob > b.prob;
                   });
  if (belief.size() > static_cast<std::size_t>(top_k)) {
    belief.resize(static_cast<std::size_t>(top_k));
  }
  const double total = std::accumulate(
      belief.begin(), belief.end(), 0.0,
      [](double acc, const StageProb& sp) { return acc + sp.prob; });
  if (total > 1.0) {
    for (auto& sp : belief) sp.prob /= total;
  }
  return belief;
}

std::string stage_templates_to_json(std::span<const StageTemplate> stages) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : stages) {
    ordered_json o;
    o["name"] = s.name;
    o["description"] = s.description;
    arr.push_back(std::move(o));
  }
  return arr.dump(4) + "\n";
}

std::string schedule_to_json(const ScheduleTable& table) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : table.entries) {
    ordered_json o;
    o["name"] = e.name;
    o["n_action_steps"] = e.n_action_steps;
    o["num_inference_steps"] = e.num_inference_steps;
    arr.push_back(std::move(o));
  }
  return arr.dump(4) + "\n";
}

}  // namespace adp

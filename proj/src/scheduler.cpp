#include "adp/hvts.hpp"

#include <exception>

namespace adp {

std::size_t select_stage(const StageBelief& belief, double gap,
                         std::mt19937_64& rng) {
  if (belief.empty()) throw HvtsError("select_stage on an empty belief");
  if (belief.size() == 1 || belief[0].prob - belief[1].prob >= gap) {
    return belief[0].stage;
  }
  std::vector<double> p;
  p.reserve(belief.size());
  double total = 0.0;
  for (const auto& sp : belief) {
    p.push_back(sp.prob);
    total += sp.prob;
  }
  if (!(total > 0.0)) return belief[0].stage;
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return belief[dist(rng)].stage;
}

StageBelief classify_oracle(int true_stage) {
  if (true_stage < 0) throw HvtsError("oracle needs a ground-truth stage");
  return {{static_cast<std::size_t>(true_stage), 1.0}};
}

StageBelief OracleClassifier::classify(const ClassifierInput& input) {
  return classify_oracle(input.true_stage);
}

SchedulerState SchedulerState::make(const SchedulerConfig& cfg,
                                    std::uint64_t seed) {
  if (cfg.period && *cfg.period < 1) throw HvtsError("period must be >= 1");
  if (cfg.initial_stage < 0) throw HvtsError("initial stage must be >= 0");
  SchedulerState st;
  st.cfg = cfg;
  st.active_stage = static_cast<std::size_t>(cfg.initial_stage);
  st.rng.seed(seed);
  return st;
}

int SchedulerState::period(const ScheduleTable& table) const {
  if (cfg.period) return *cfg.period;
  return table.entries.at(active_stage).n_action_steps;
}

TickResult scheduler_tick(SchedulerState& st, const ClassifierInput& input,
                          StageClassifier& classifier,
                          const ScheduleTable& table) {
  if (table.entries.empty()) throw HvtsError("empty schedule table");
  if (st.active_stage >= table.entries.size()) {
    throw HvtsError("active stage out of range");
  }
  TickResult out;
  if (!st.has_belief || st.steps_since >= st.period(table)) {
    ++st.classifier_calls;
    out.classified = true;
    try {
      StageBelief b = classifier.classify(input);
      std::erase_if(b, [&](const StageProb& sp) {
        return sp.stage >= table.entries.size();
      });
      if (b.empty()) throw HvtsError("belief names no scheduled stage");
      st.active_stage = select_stage(b, st.cfg.gap, st.rng);
      st.cached_belief = std::move(b);
      st.degraded = false;
    } catch (const std::exception&) {
      ++st.classifier_failures;
      st.degraded = true;
    }
    // A failed call still counts as an attempt, so retries wait a period.
    st.has_belief = true;
    st.steps_since = 0;
  }
  ++st.steps_since;
  const auto& e = table.entries[st.active_stage];
  out.n_action_steps = e.n_action_steps;
  out.num_inference_steps = e.num_inference_steps;
  out.stage = st.active_stage;
  return out;
}

}  // namespace adp

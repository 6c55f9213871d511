#include "adp/hvts.hpp"

#include <sstream>

namespace adp {
namespace {

void append_stage_definitions(std::ostringstream& os,
                              std::span<const StageTemplate> stages) {
  for (const auto& s : stages) {
    os << "- " << s.name << ": " << s.description << '\n';
  }
}

}  // namespace

std::string build_decomposition_prompt(std::string_view task_desc,
                                       int num_images, int num_stages) {
  if (task_desc.empty()) throw HvtsError("task description is empty");
  if (num_stages < 1) throw HvtsError("num_stages must be >= 1");
  if (num_images < 0) throw HvtsError("num_images must be >= 0");
  std::ostringstream os;
  os << "Task: " << task_desc << "\n\n"
     << "You are given " << num_images
     << " images showing the progression of the task. Decompose the task "
        "into exactly "
     << num_stages << " stages based on visual changes.\n"
     << "Each stage should describe the pixel-level visual change between "
        "states.\n"
     << "Naming rule: task/stage names should use underscores instead of "
        "spaces\n\n"
     << "Return exactly " << num_stages << " stages in JSON with schema:\n"
     << "[\n"
     << "  {\n"
     << "    \"name\": \"<stage_name>\",\n"
     << "    \"description\": \"Action features: <desc>\"\n"
     << "  }\n"
     << "]\n";
  return os.str();
}

std::string build_schedule_prompt(std::span<const StageTemplate> stages,
                                  const ScheduleRanges& r) {
  if (stages.empty()) throw HvtsError("no stages to schedule");
  if (r.a_min > r.a_max || r.i_min > r.i_max || r.a_min < 1 || r.i_min < 1) {
    throw HvtsError("invalid schedule ranges");
  }
  std::ostringstream os;
  os << "Task stages (total " << stages.size() << "):\n";
  append_stage_definitions(os, stages);
  os << "Assign two parameters for each stage:\n"
     << "- n_action_steps: integer in [" << r.a_min << ", " << r.a_max << "]\n"
     << "- num_inference_steps: integer in [" << r.i_min << ", " << r.i_max
     << "]\n"
     << "Choose n_action_steps and num_inference_steps based on the relative "
        "difficulty of each stage.\n"
     << "Use smaller values for simple stages and larger values for more "
        "precise stages.\n"
     << "Do not assign the same values to all stages.\n\n"
     << "Return JSON for all stages:\n"
     << "[\n"
     << "  {\n"
     << "    \"name\": \"<stage_name>\",\n"
     << "    \"n_action_steps\": <N_a>,\n"
     << "    \"num_inference_steps\": <N_d>\n"
     << "  }\n"
     << "]\n";
  return os.str();
}

std::string build_classification_prompt(std::span<const StageTemplate> stages,
                                        int top_k) {
  if (stages.empty()) throw HvtsError("no stages to classify");
  if (top_k < 1) throw HvtsError("top_k must be >= 1");
  std::ostringstream os;
  os << "Task: You are given several consecutive frames from a robotic "
        "manipulation task.\n"
     << "The images are ordered chronologically from earliest to most "
        "recent.\n\n"
     << "Analyze the visual progression and determine the current stage of "
        "the task.\n"
     << "Focus primarily on the most recent frame while considering the "
        "temporal evolution.\n\n"
     << "Stages:\n";
  append_stage_definitions(os, stages);
  os << "\nReturn the top-" << top_k
     << " most likely stages ranked by probability.\n\n"
     << "Output format:\n\n";
  for (int i = 0; i < top_k; ++i) os << "stage_name: probability\n";
  os << "\nOnly output the stage names and probabilities without additional "
        "explanations.\n";
  return os.str();
}

}  // namespace adp

#include <sstream>

#include "eckv/sim_network.hpp"

namespace eckv {

std::vector<ScenarioDirective> parse_scenario(std::string_view text) {
  std::vector<ScenarioDirective> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream is(line);
    std::string word;
    if (!(is >> word)) continue;
    auto bad = [&](const std::string& why) {
      return ScenarioError("scenario line " + std::to_string(lineno) + ": " + why);
    };
    double ms = 0;
    if (word != "at" || !(is >> ms) || ms < 0) throw bad("expected 'at <ms>'");
    ScenarioDirective d;
    d.at = static_cast<VirtualTime>(ms * kMillis);
    std::string action;
    is >> action;
    if (action == "fail" || action == "restore") {
      d.action = action == "fail" ? ScenarioDirective::Action::fail : ScenarioDirective::Action::restore;
      if (!(is >> d.node)) throw bad("missing server id");
    } else if (action == "congest") {
      d.action = ScenarioDirective::Action::congest;
      std::string model;
      double mean = 0, sd = 0;
      if (!(is >> d.node >> model) || model != "normal" || !(is >> mean >> sd) || mean < 0 || sd < 0) {
        throw bad("expected 'congest <server> normal <mean_ms> <sd_ms>'");
      }
      d.extra = DelayModel::normal(mean * kMillis, sd * kMillis);
    } else if (action == "partition") {
      d.action = ScenarioDirective::Action::partition;
      if (!(is >> d.node >> d.peer)) throw bad("expected 'partition <a> <b>'");
    } else {
      throw bad("unknown action '" + action + "'");
    }
    std::string tail;
    if (is >> tail) {
      double dur = 0;
      if (tail != "for" || d.action == ScenarioDirective::Action::fail ||
          d.action == ScenarioDirective::Action::restore || !(is >> dur) || dur < 0) {
        throw bad("unexpected '" + tail + "'");
      }
      d.duration = static_cast<VirtualTime>(dur * kMillis);
    }
    out.push_back(d);
  }
  return out;
}

void apply_scenario(SimNetwork& net, const std::vector<ScenarioDirective>& script,
                    std::function<void(NodeId)> on_fail, std::function<void(NodeId)> on_restore) {
  const VirtualTime base = net.now();
  for (const auto& d : script) {
    const VirtualTime start = base + d.at;
    const VirtualTime end = d.duration == ~VirtualTime{0} ? d.duration : start + d.duration;
    switch (d.action) {
      case ScenarioDirective::Action::congest:
        net.add_congestion(Congestion{d.node, start, end, d.extra});
        break;
      case ScenarioDirective::Action::partition:
        net.add_partition(Partition{d.node, d.peer, start, end});
        break;
      case ScenarioDirective::Action::fail:
        net.schedule(kHarnessNode, d.at, [on_fail, n = d.node] { on_fail(n); });
        break;
      case ScenarioDirective::Action::restore:
        net.schedule(kHarnessNode, d.at, [on_restore, n = d.node] { on_restore(n); });
        break;
    }
  }
}

}  // namespace eckv

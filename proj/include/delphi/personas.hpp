#pragma once

#include <string_view>
#include <vector>

#include "delphi/core.hpp"
#include "delphi/errors.hpp"

namespace delphi {

/// Built-in persona sets. "diverse_security" is the default five-expert cyber
/// panel; "uniform_superforecaster" replaces all five with the same
/// calibration-focused generalist (useful for persona ablations).
inline std::vector<Persona> builtin_personas(std::string_view set_id) {
  if (set_id == "diverse_security") {
    return {
        {"A", "Defensive Security Specialist", "10 years SOC experience, APT detection",
         "Defender's perspective, detection points"},
        {"B", "Malware Reverse Engineer", "Anti-virus research lab",
         "Bottom-up from technical implementation"},
        {"C", "AI/ML Security Researcher", "PhD in CS, AI security",
         "Systematic analysis of LLM assistance"},
        {"D", "Threat Intelligence Analyst", "Former intelligence community",
         "Observed attacker behavior patterns"},
        {"E", "Security Compliance Officer", "CISSP, CISM certified",
         "Framework-based, control effectiveness"},
    };
  }
  if (set_id == "uniform_superforecaster") {
    std::vector<Persona> panel;
    for (const char* id : {"A", "B", "C", "D", "E"}) {
      panel.push_back(
          {id, "Superforecaster",
           "Generalist forecaster with a strong calibration track record across domains",
           "Calibrated probabilistic reasoning: reference classes, base rates, explicit "
           "uncertainty"});
    }
    return panel;
  }
  throw ConfigError("unknown builtin persona set '" + std::string(set_id) + "'");
}

}  // namespace delphi

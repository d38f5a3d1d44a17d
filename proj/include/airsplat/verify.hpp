// Self-contained property/gradient verification suite behind `verify`.

#pragma once

#include <string>
#include <vector>

namespace airsplat {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

struct VerifyOptions {
  bool quick = false;            // reduced trial counts, finishes in well under 60 s
  bool mutate_opa_grad = false;  // inject a sign error into the L_opa gradient;
                                 // the FD property must then FAIL to pass
};

std::vector<PropertyResult> run_verification(const VerifyOptions& opts);

bool all_passed(const std::vector<PropertyResult>& results);

}  // namespace airsplat

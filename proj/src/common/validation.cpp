#include "dstage/common/validation.hpp"

namespace dstage {

std::string ValidationReport::summary() const {
  if (violations.empty()) return "ok";
  std::string out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out += "; ";
    out += violations[i].path + ": " + violations[i].message;
  }
  return out;
}

Json ValidationReport::to_json() const {
  Json list = Json::array();
  for (const auto& v : violations) list.push_back({{"path", v.path}, {"message", v.message}});
  return {{"valid", valid()}, {"violations", std::move(list)}};
}

}  // namespace dstage

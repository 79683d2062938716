#include "vical/types.hpp"

namespace vical {

KeyframeState boxplus(const KeyframeState& s, const Vec15& d) {
  using namespace kf_index;
  KeyframeState out = s;
  out.q_GI = geometry::boxplus(s.q_GI, d.segment<3>(kRotation));
  out.p_GI += d.segment<3>(kPosition);
  out.v_GI += d.segment<3>(kVelocity);
  out.b_a += d.segment<3>(kAccelBias);
  out.b_g += d.segment<3>(kGyroBias);
  return out;
}

Vec15 boxminus(const KeyframeState& a, const KeyframeState& b) {
  using namespace kf_index;
  Vec15 d;
  d.segment<3>(kRotation) = geometry::boxminus(a.q_GI, b.q_GI);
  d.segment<3>(kPosition) = a.p_GI - b.p_GI;
  d.segment<3>(kVelocity) = a.v_GI - b.v_GI;
  d.segment<3>(kAccelBias) = a.b_a - b.b_a;
  d.segment<3>(kGyroBias) = a.b_g - b.b_g;
  return d;
}

}  // namespace vical

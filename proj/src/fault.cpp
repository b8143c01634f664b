#include "ucim/fault.hpp"

#include <bit>
#include <ostream>
#include <stdexcept>

namespace ucim {

std::string_view to_string(FieldMask m) {
  switch (m) {
    case FieldMask::kSign: return "sign";
    case FieldMask::kExponent: return "exponent";
    case FieldMask::kMantissa: return "mantissa";
    case FieldMask::kFull: return "full";
  }
  return "?";
}

std::optional<FieldMask> parse_field_mask(std::string_view s) {
  if (s == "sign") return FieldMask::kSign;
  if (s == "exponent") return FieldMask::kExponent;
  if (s == "mantissa") return FieldMask::kMantissa;
  if (s == "full") return FieldMask::kFull;
  return std::nullopt;
}

std::string_view to_string(InjectionMode m) { return m == InjectionMode::kStatic ? "static" : "dynamic"; }

std::optional<InjectionMode> parse_injection_mode(std::string_view s) {
  if (s == "static") return InjectionMode::kStatic;
  if (s == "dynamic") return InjectionMode::kDynamic;
  return std::nullopt;
}

void InjectionPlan::validate() const {
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::invalid_argument("ber must lie in [0, 1]");
}

void write_flip_log_csv(std::ostream& os, const FlipLog& log) {
  os << "run,word_index,bit_index,access_index\n";
  for (const FlipEvent& e : log) {
    os << e.run << ',' << e.word_index << ',' << e.bit_index << ',' << e.access_index << '\n';
  }
}

std::uint16_t flip_pattern(const RngStream& rng, double ber, std::uint32_t word, std::uint64_t access,
                           std::uint16_t mask) {
  if (ber <= 0.0 || mask == 0) return 0;
  if (ber >= 1.0) return mask;
  std::uint16_t pattern = 0;
  for (std::uint32_t group = 0; group < 4; ++group) {
    if (((mask >> (4 * group)) & 0xFu) == 0) continue;
    const PhiloxCounter lanes = rng.block(word, access, group);
    for (std::uint32_t j = 0; j < 4; ++j) {
      const std::uint32_t bit = 4 * group + j;
      if (((mask >> bit) & 1u) && RngStream::below(ber, lanes[j])) {
        pattern = static_cast<std::uint16_t>(pattern | (1u << bit));
      }
    }
  }
  return pattern;
}

std::vector<std::uint32_t> sample_flips(const RngStream& rng, double ber, std::uint32_t word,
                                        std::uint64_t access, const std::vector<bool>& exposed) {
  std::vector<std::uint32_t> out;
  if (ber <= 0.0) return out;
  const auto n = static_cast<std::uint32_t>(exposed.size());
  for (std::uint32_t group = 0; 4 * group < n; ++group) {
    bool any = false;
    for (std::uint32_t bit = 4 * group; bit < n && bit < 4 * group + 4; ++bit) any = any || exposed[bit];
    if (!any) continue;
    const PhiloxCounter lanes = rng.block(word, access, group);
    for (std::uint32_t bit = 4 * group; bit < n && bit < 4 * group + 4; ++bit) {
      if (exposed[bit] && RngStream::below(ber, lanes[bit & 3])) out.push_back(bit);
    }
  }
  return out;
}

StaticInjection inject_static(std::span<const Half> words, const InjectionPlan& plan, std::uint64_t run) {
  plan.validate();
  if (plan.mode != InjectionMode::kStatic) throw std::invalid_argument("inject_static: plan is not static");
  const RngStream rng(plan.master_seed, run);
  const std::uint16_t mask = mask_bits(plan.mask);
  StaticInjection out;
  out.words.assign(words.begin(), words.end());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    const std::uint16_t pattern = flip_pattern(rng, plan.ber, idx, kStaticAccess, mask);
    if (pattern == 0) continue;
    out.words[i].bits ^= pattern;
    for (std::uint32_t bit = 0; bit < 16; ++bit) {
      if ((pattern >> bit) & 1u) out.log.push_back({run, idx, bit, -1});
    }
  }
  return out;
}

Half sample_dynamic(Half word, std::uint32_t word_index, std::uint64_t access_index, const InjectionPlan& plan,
                    std::uint64_t run) {
  if (plan.mode != InjectionMode::kDynamic) throw std::invalid_argument("sample_dynamic: plan is not dynamic");
  const RngStream rng(plan.master_seed, run);
  return Half(static_cast<std::uint16_t>(word.bits ^
                                         flip_pattern(rng, plan.ber, word_index, access_index, mask_bits(plan.mask))));
}

}  // namespace ucim

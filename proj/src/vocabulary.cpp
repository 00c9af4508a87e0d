#include "belief/vocabulary.hpp"

#include <algorithm>
#include <cctype>

namespace belief {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

constexpr std::array<std::array<double, 3>, kNumClasses> kColors = {{
    {0.0, 0.0, 0.0},
    {0.62, 0.56, 0.48},
    {0.86, 0.85, 0.80},
    {0.55, 0.36, 0.20},
    {0.58, 0.40, 0.22},
    {0.28, 0.32, 0.62},
    {0.20, 0.52, 0.32},
    {0.72, 0.22, 0.22},
    {0.45, 0.30, 0.16},
    {0.12, 0.68, 0.14},
    {0.08, 0.08, 0.10},
    {0.94, 0.94, 0.98},
    {0.40, 0.40, 0.46},
}};

} // namespace

int class_id(std::string_view name) {
    for (int i = 1; i < kNumClasses; ++i) {
        if (iequals(kClassNames[static_cast<std::size_t>(i)], name)) {
            return i;
        }
    }
    return 0;
}

std::string_view class_name(int id) {
    if (id < 0 || id >= kNumClasses) {
        return kClassNames[0];
    }
    return kClassNames[static_cast<std::size_t>(id)];
}

Vec3 class_color(int id) {
    const auto &c = kColors[static_cast<std::size_t>(std::clamp(id, 0, kNumClasses - 1))];
    return {c[0], c[1], c[2]};
}

bool is_target_class(std::string_view name) {
    return std::any_of(kTargetClasses.begin(), kTargetClasses.end(),
                       [&](std::string_view t) { return iequals(t, name); });
}

} // namespace belief

#pragma once

#include <string_view>

namespace cyclealign::assets {

// Contents of assets/static_demo.txt and assets/prompt_template.txt,
// embedded at configure time.
extern const std::string_view kStaticDemo;
extern const std::string_view kPromptTemplate;

}  // namespace cyclealign::assets

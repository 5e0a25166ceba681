#pragma once

// Prompt templates for the theory model, the self-identification verifier
// and the classification model. Kept byte-identical to assets/prompts/*.txt;
// placeholders are {name} tokens.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "splits/common.hpp"

namespace splits::prompts {

inline constexpr std::string_view kTheoryModelTemplate = R"PROMPT(### Task Overview:
As a social media analysis assistant, your task is to write down features that help attribute social media posts to specific demographic groups. You will be given two demographic groups (A and B), and a general description of the content of the posts. In addition, to help you see how people in these groups discuss that content differently on social media, you will be given examples posts, a mixture of posts from both groups.

Using your knowledge of how users in these demographics think, feel, and express themselves, and using the example posts to guide you, you must come up with 3 pairs of contrastive features that would help distinguish the groups. But don't rely too much on the examples, as your features should generalize. The features could be based on tone, vocabulary, topics, or any other aspect of the posts you can think of. Your final response will be pairs of features.

### Response Format:
Your response must adhere to the format below:
Group A: <constrastive feature of posts made by Group A>; Group B <constrastive feature of posts made by Group B>
Group A: <constrastive feature of posts made by Group A>; Group B <constrastive feature of posts made by Group B>
Group A: <constrastive feature of posts made by Group A>; Group B <constrastive feature of posts made by Group B>

### Demographic A
{demo_a}

### Demographic B
{demo_b}

### Description
{topic}

### Example Posts
{calibration_set}

### Response)PROMPT";

inline constexpr std::string_view kSelfIdentificationTemplate = R"PROMPT(### Task Overview:
As a social media analysis assistant, your task is to analyze a social media post and determine if the user has self-identified themselves. You will be given a post, and a target demographic (e.g. "Black", "Teacher", etc). Your task is to read the post and determine with high confidence whether the user has self-identified themselves as the demographic (e.g. "I am a black man"). In addition, you must determine whether the user has self-identified as a demographic that is mutually exclusive to the target demographic (e.g., for "black", this could be saying "I am a white woman" or "I am not black"; for "teacher", this could be saying "I work in construction" or "I am not a teacher").

### Response Format:
Your response must adhere to the format below:
User self-identifies as demographic: yes OR no
User self-identifies as mutually exclusive demographic: yes OR no

### Demographic
{demographic}

### Social Media Post
{post}

### Response)PROMPT";

inline constexpr std::string_view kClassificationTemplate = R"PROMPT(### Task Overview:
As a social media analysis assistant, your task is to attribute social media posts to specific demographic groups. You will be given two demographic groups (A and B) and two sets of posts (1 and 2), where one set is written by A and the other is written by B, but you do not know who wrote which. Your task is to attribute each set to the correct demographic by matching them together. To help you, you will be given some guidelines on what to look for. Format your response exactly as in the examples.

### Example Response
1. Explanation: I think that Post Set 1 goes with A because... and Post Set 2 goes with B because...
2. Post Set 1: A
3. Post Set 2: B

### Example Response
1. Explanation: I think that Post Set 1 goes with B because... and Post Set 2 goes with A because...
2. Post Set 1: B
3. Post Set 2: A

### Demographic A
{demo_a}

### Demographic B
{demo_b}

### Post Set 1
{post_set1}

### Post Set 2
{post_set2}

### Guidelines
{theories}

### Instructions
Now, please match the two Post Sets with the two groups.

### Response
)PROMPT";

// Substitutes {key} placeholders in one pass. Substituted values are not
// rescanned, so braces inside post text are left alone. Unknown
// placeholders are an error.
inline std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto key = tmpl.substr(i + 1, close - i - 1);
        auto it = values.find(key);
        if (it == values.end()) throw Error(ErrorKind::invalid_argument, "no value for placeholder {" + std::string(key) + "}");
        out += it->second;
        i = close + 1;
        continue;
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

// "Post 1: ...", one post per line.
inline std::string format_posts(const std::vector<std::string>& texts) {
  std::string out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (i) out += '\n';
    out += "Post " + std::to_string(i + 1) + ": " + texts[i];
  }
  return out;
}

inline std::string render_theory_prompt(const std::string& demo_a, const std::string& demo_b, const std::string& topic,
                                        const std::vector<std::string>& calibration) {
  return render(kTheoryModelTemplate, {{"demo_a", demo_a},
                                       {"demo_b", demo_b},
                                       {"topic", topic},
                                       {"calibration_set", format_posts(calibration)}});
}

inline std::string render_self_id_prompt(const std::string& demographic, const std::string& post) {
  return render(kSelfIdentificationTemplate, {{"demographic", demographic}, {"post", post}});
}

inline std::string render_classification_prompt(const std::string& demo_a, const std::string& demo_b,
                                                const std::vector<std::string>& set1,
                                                const std::vector<std::string>& set2, const std::string& theories) {
  return render(kClassificationTemplate, {{"demo_a", demo_a},
                                          {"demo_b", demo_b},
                                          {"post_set1", format_posts(set1)},
                                          {"post_set2", format_posts(set2)},
                                          {"theories", theories}});
}

}  // namespace splits::prompts

// Prompt wording is fixed; keep every byte (including trailing spaces) intact.
#pragma once

namespace mangapipe::templates {

inline constexpr const char* kProseHeader = R"(I have a series of manga panel descriptions and dialogues.)";

/// Closing instruction up to the narrative-format sentence.
inline constexpr const char* kProseClosing = R"(I want you to write a summary so that a blind or visually impaired person can understand the story. 
Make sure to stick to the provided details. All these panels belong to the same page so make sure 
your narrative is coherent. )";

inline constexpr const char* kProseFormatClause = "The format of the narrative should be a ";

/// Two positional `{}` slots: predicted text, then reference text.
inline constexpr const char* kJudge = R"(You are trying to tell if a candidate caption/prose is describing the same image as a reference caption/prose. 
Given the following rubric, I want you to give me a score on a scale from 1-5.

### Rubric for Evaluating Manga Panel Descriptions (1-5 Scale)

1. **Severely Inaccurate (1):**
   - The predicted caption/prose is mostly unrelated to the reference. Key elements are either missing or
   incorrectly presented, and there are major contradictions that obscure the intended context.

2. **Somewhat Off-Base (2):**
   - The predicted caption/prose captures some correct ideas but overlooks many crucial details. Major inaccuracies
   exist, such as incorrect character features or setting descriptions. The overall theme may slightly resemble
   the reference but lacks precision.

3. **Partially Accurate (3):**
   - The predicted caption/prose includes several recognizable aspects of the reference but has important 
   inaccuracies. While it conveys the general idea, significant details about multiple 
   features like characters, actions, or settings may be misrepresented.

4. **Mostly Accurate (4):**
   - The predicted caption/prose captures most key elements of the reference accurately. Minor inaccuracies are 
   permissible as long as they do not significantly alter the overall understanding. Additional thematic elements
   or details may be present if they enhance the scene without conflicting with its primary depiction.

5. **Highly Accurate (5):**
   - The predicted caption/prose is nearly identical to the reference in both content and context. It seamlessly
   captures every detail, and any enhancements serve only to enrich the description without deviating from 
   the original meaning.

Predicted caption/prose:

{}

Reference caption/prose:

{}

Instructions:

Output your response in a json with a key "judgement" that contains your analysis of the predicted caption/prose
and a key "score" between 1 and 5 (decimal is allowed) that contains your score.)";

inline constexpr const char* kCaption =
    "Describe this image to me. Focus on the characters, their appearance, their actions, and the environment. "
    "Please ignore any text, dialogues, or speech bubbles in the image.";

}  // namespace mangapipe::templates

#pragma once

#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iviq/question.hpp"
#include "iviq/ranking.hpp"

namespace iviq {

class ModelGateway;

enum class PromptTemplateId { auto_text, auto_text_vid };

// Language-model prompts. "unique identify" is kept as written.
inline constexpr std::string_view kAutoTextTemplate =
    "Suppose you are given the following video descriptions {Q}, What question would you ask to help you unique "
    "identify the video?";
inline constexpr std::string_view kAutoTextVidTemplate =
    "Suppose you are given the following video descriptions: {C}. What question would you ask to help you unique "
    "identify the video described as follows: {Q}?";
inline constexpr std::string_view kCaptionSeparator = "; ";

struct CaptionSet {
  int round = 0;
  std::vector<std::pair<std::string, std::string>> captions;  // (video_id, caption) in rank order
};

std::string render_auto_text(std::string_view query);
std::string render_auto_text_vid(std::string_view query, const CaptionSet& captions);

// Captions are query-independent, so one cache serves a whole experiment.
class CaptionCache {
 public:
  std::string get(const std::string& video_id, const ModelGateway& gateway);

 private:
  std::mutex mutex_;
  std::map<std::string, std::string> captions_;
};

CaptionSet gather_captions(const RankedList& list, std::size_t k, const ModelGateway& gateway,
                           CaptionCache* cache = nullptr, int round = 0);

// Calls the language model and normalizes the reply into an open question.
Question generate_question(std::string_view prompt, const ModelGateway& gateway, int max_tokens = 32);

}  // namespace iviq

#include "iviq/parametric.hpp"

#include "iviq/gateway.hpp"

namespace iviq {

namespace {

// Single left-to-right pass, so substituted text is never rescanned.
std::string render(std::string_view tmpl, std::string_view query, std::string_view captions) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 3, "{Q}") == 0) {
      out += query;
      i += 3;
    } else if (tmpl.compare(i, 3, "{C}") == 0) {
      out += captions;
      i += 3;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

}  // namespace

std::string render_auto_text(std::string_view query) {
  if (text::trim(query).empty()) throw ValidationError("auto_text prompt: empty query");
  return render(kAutoTextTemplate, query, {});
}

std::string render_auto_text_vid(std::string_view query, const CaptionSet& captions) {
  if (text::trim(query).empty()) throw ValidationError("auto_text_vid prompt: empty query");
  if (captions.captions.empty()) throw ValidationError("auto_text_vid prompt: empty caption set");
  std::vector<std::string> parts;
  for (const auto& [id, caption] : captions.captions) {
    if (text::trim(caption).empty()) throw ValidationError("auto_text_vid prompt: empty caption for '" + id + "'");
    parts.push_back(caption);
  }
  return render(kAutoTextVidTemplate, query, text::join(parts, kCaptionSeparator));
}

std::string CaptionCache::get(const std::string& video_id, const ModelGateway& gateway) {
  {
    std::lock_guard lock(mutex_);
    if (const auto it = captions_.find(video_id); it != captions_.end()) return it->second;
  }
  std::string caption = gateway.caption(video_id);
  std::lock_guard lock(mutex_);
  return captions_.emplace(video_id, std::move(caption)).first->second;
}

CaptionSet gather_captions(const RankedList& list, std::size_t k, const ModelGateway& gateway, CaptionCache* cache,
                           int round) {
  if (k < 1 || k > list.size()) {
    throw ValidationError("caption_k=" + std::to_string(k) + " out of range [1, " + std::to_string(list.size()) + "]");
  }
  CaptionSet set;
  set.round = round;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& id = list.entries[i].video_id;
    std::string caption;
    try {
      caption = cache != nullptr ? cache->get(id, gateway) : gateway.caption(id);
    } catch (const Error& e) {
      throw ProviderError("/v1/caption", "video '" + id + "': " + e.what());
    }
    set.captions.emplace_back(id, std::move(caption));
  }
  return set;
}

Question generate_question(std::string_view prompt, const ModelGateway& gateway, int max_tokens) {
  if (text::trim(prompt).empty()) throw ValidationError("generate_question: empty prompt");
  std::string q = text::trim(gateway.lm_generate(prompt, max_tokens));
  if (q.empty()) throw ProviderError("/v1/lm/generate", "empty generation");
  if (q.back() != '?') q.push_back('?');
  return {std::move(q), QuestionKind::open, Segment::whole};
}

}  // namespace iviq

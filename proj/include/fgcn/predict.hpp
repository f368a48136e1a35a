#pragma once

// Streaming prediction: stage t is scored as soon as the frames its clip
// needs have been read, so P_t never depends on frames after stage t.

#include <functional>
#include <istream>
#include <memory>
#include <string>
#include <vector>

#include "fgcn/training.hpp"

namespace fgcn {

struct StageEvent {
  std::size_t stage = 0;             // 1-based
  std::size_t frames_read = 0;       // frames parsed when P_t was emitted
  std::size_t last_frame_used = 0;   // largest 0-based frame index feeding P_t
  std::vector<double> probs;         // combined across streams
};

struct StreamingResult {
  std::string id;
  std::size_t frames = 0;
  std::vector<StageEvent> stages;
  std::vector<double> fused;
  std::size_t label = 0;
};

// Reads a sequence from `in` stage by stage. `on_stage` fires after each P_t.
template <typename T>
StreamingResult predict_streaming(Network<T>& net, std::istream& in, const std::string& source,
                                  const PreprocessOptions& pre,
                                  const std::function<void(const StageEvent&)>& on_stage = {}) {
  const ModelConfig& cfg = net.config();
  SequenceReader reader(in, source, ParseOptions{cfg.bodies});
  const std::size_t len = reader.total_frames();
  const StagePlan plan = plan_stages(len, cfg.stages, cfg.clip_len, SamplingMode::eval_deterministic);
  const std::size_t lookahead = net.uses_motion() ? 1 : 0;
  const auto w = net.stream_weights();
  const std::size_t C = net.num_classes();

  std::vector<std::unique_ptr<Tape<T>>> tapes;
  std::vector<typename FgcnModel<T>::StageRunner> runners;
  for (std::size_t s = 0; s < net.size(); ++s) {
    tapes.push_back(std::make_unique<Tape<T>>(false));
    runners.push_back(net.stream(s).runner(*tapes.back(), Mode::eval));
  }

  StreamingResult res;
  res.id = reader.sequence().id;
  res.frames = len;
  for (std::size_t t = 0; t < cfg.stages; ++t) {
    const auto frames = plan.clip_frames(t);
    std::size_t last = 0;
    for (std::size_t f : frames) last = std::max(last, f);
    reader.load_through(std::min(last + lookahead, len - 1));
    if (reader.sequence().label >= C)
      throw DataError(source, reader.line(), "label outside the model's class range");
    const SkeletonSequence seq = preprocess(reader.sequence(), pre);
    const std::vector<const SkeletonSequence*> batch{&seq};
    const std::vector<StagePlan> plans{plan};
    StageEvent ev;
    ev.stage = t + 1;
    ev.frames_read = reader.frames_loaded();
    ev.last_frame_used = std::min(last + lookahead, len - 1);
    ev.probs.assign(C, 0.0);
    for (std::size_t s = 0; s < net.size(); ++s) {
      const Var<T> p = runners[s].step(net.stream(s).input_clip(batch, plans, t));
      for (std::size_t c = 0; c < C; ++c) ev.probs[c] += w[s] * static_cast<double>(p.value()[c]);
    }
    if (on_stage) on_stage(ev);
    res.stages.push_back(std::move(ev));
  }
  reader.finish();
  res.fused.assign(C, 0.0);
  for (std::size_t s = 0; s < net.size(); ++s) {
    const Var<T> f = runners[s].finish();
    for (std::size_t c = 0; c < C; ++c) res.fused[c] += w[s] * static_cast<double>(f.value()[c]);
  }
  res.label = argmax(res.fused);
  return res;
}

inline std::string format_probs(const std::vector<double>& p) {
  std::string out;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (c) out += ',';
    out += detail::fmt(p[c]);
  }
  return out;
}

}  // namespace fgcn

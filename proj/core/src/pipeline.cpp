#include "argex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"
#include "argex/rng.hpp"

namespace argex {

using nlohmann::json;
using nn::Tape;
using nn::Var;

void TrainConfig::validate() const {
  if (steps < 0) throw DataError("train config: steps must be >= 0");
  if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw DataError("train config: learning_rate must be > 0");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
    throw DataError("train config: warmup_ratio must be in [0,1]");
  if (max_grad_norm <= 0.0) throw DataError("train config: max_grad_norm must be > 0");
  if (cross_attn_lr_mult <= 0.0) throw DataError("train config: cross_attn_lr_mult must be > 0");
}

namespace {

struct SlotInstance {
  int event = 0;  // occurrence index
  int slot = 0;   // index into pass.slots
  std::string role;
  SpanDistributions dist;
};

struct PassForward {
  EncodeOutput enc;
  Var h_de;
  std::vector<SlotInstance> instances;
};

PassForward run_pass(Tape& t, const AssembledInput& pass, const ModelConfig& cfg,
                     const nn::ParamStore& ps, BiasStats* stats, ForwardStats* fwd) {
  DependencyMatrix dep = build_dependency_matrix(pass);
  PassForward out;
  out.enc = encode(t, pass.token_ids, &dep, cfg, ps, stats);
  if (fwd) ++fwd->encoder_passes;
  out.h_de = decode(t, out.enc.hidden, &dep, cfg, ps);
  const auto mask = pass.span_position_mask();

  std::map<int, int> trigger_pos;
  for (const TriggerMark& tm : pass.triggers) trigger_pos[tm.event] = tm.open_pos;

  for (int e = 0; e < pass.n_events(); ++e) {
    const int unit = (e < static_cast<int>(pass.event_unit.size())) ? pass.event_unit[e] : -1;
    if (unit < 0) continue;
    auto tp = trigger_pos.find(e);
    if (tp == trigger_pos.end()) continue;
    for (std::size_t s = 0; s < pass.slots.size(); ++s) {
      const PromptSlot& slot = pass.slots[s];
      if (slot.unit != unit) continue;
      SlotInstance inst;
      inst.event = e;
      inst.slot = static_cast<int>(s);
      inst.role = slot.role;
      Var h_tilde;
      if (cfg.disable_eia) {
        h_tilde = eia_enhance(t, out.enc.hidden, Var{}, out.h_de, slot.lo, slot.hi, ps, true);
      } else {
        Var p = eia_weights(t, out.enc.attention, tp->second, slot.lo, slot.hi);
        h_tilde = eia_enhance(t, out.enc.hidden, p, out.h_de, slot.lo, slot.hi, ps, false);
      }
      auto [phi_s, phi_e] = span_selectors(t, h_tilde, ps);
      inst.dist = span_distributions(t, out.h_de, phi_s, phi_e, mask);
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

bool pass_has_instances(const AssembledInput& pass) {
  std::map<int, int> trigger_pos;
  for (const TriggerMark& tm : pass.triggers) trigger_pos[tm.event] = tm.open_pos;
  for (int e = 0; e < pass.n_events(); ++e) {
    if (e < static_cast<int>(pass.event_unit.size()) && pass.event_unit[e] >= 0 &&
        trigger_pos.count(e) && !pass.slots.empty())
      return true;
  }
  return false;
}

Var pass_loss(Tape& t, const AssembledInput& pass, const PassForward& fwd, long long* dropped) {
  std::map<std::pair<int, std::string>, std::vector<int>> groups;
  for (std::size_t i = 0; i < fwd.instances.size(); ++i) {
    const SlotInstance& inst = fwd.instances[i];
    groups[{inst.event, inst.role}].push_back(static_cast<int>(i));
  }
  std::map<std::pair<int, std::string>, std::vector<std::pair<int, int>>> golds;
  for (const GoldSpan& g : pass.gold) golds[{g.event, g.role}].push_back({g.lo, g.hi});

  std::vector<SpanDistributions> dists;
  dists.reserve(fwd.instances.size());
  for (const SlotInstance& inst : fwd.instances) dists.push_back(inst.dist);

  std::vector<SlotTarget> targets;
  for (const auto& [key, members] : groups) {
    std::vector<const nn::Tensor*> sp, ep;
    for (int i : members) {
      sp.push_back(&t.value(fwd.instances[i].dist.start));
      ep.push_back(&t.value(fwd.instances[i].dist.end));
    }
    auto it = golds.find(key);
    static const std::vector<std::pair<int, int>> kNoGold;
    AssignmentResult res = optimal_assignment(sp, ep, it == golds.end() ? kNoGold : it->second);
    if (dropped) *dropped += res.dropped_gold;
    for (const SlotTarget& target : res.targets)
      targets.push_back({members[target.slot], target.start, target.end});
  }
  // Gold groups without any slot instance (events outside this pass are
  // already filtered by assembly; this is a defensive count).
  for (const auto& [key, spans] : golds)
    if (!groups.count(key) && dropped) *dropped += static_cast<long long>(spans.size());

  return bipartite_loss(t, dists, targets);
}

struct AdamState {
  std::map<std::string, nn::Tensor> m;
  std::map<std::string, nn::Tensor> v;
  long long step = 0;
};

void adam_step(nn::ParamStore& params, AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++state.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, entry] : params.entries()) {
    nn::Tensor& m = state.m.at(name);
    nn::Tensor& v = state.v.at(name);
    const double step_lr = lr * entry.lr_mult;
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double g = entry.grad[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      entry.value[i] -= step_lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

}  // namespace

Checkpoint train(const Corpus& corpus, const TemplateRegistry& reg, const ModelConfig& mcfg,
                 const TrainConfig& tcfg, std::ostream* log) {
  mcfg.validate();
  tcfg.validate();
  validate_corpus(corpus, reg);

  Vocabulary vocab = Vocabulary::build(corpus, reg, 16);
  nn::ParamStore params =
      init_model_params(mcfg, vocab.size(), tcfg.seed, tcfg.cross_attn_lr_mult);

  std::vector<AssembledInput> passes;
  std::vector<std::vector<int>> doc_passes;
  long long dropped_gold = 0;
  for (const Document& doc : corpus.docs) {
    AssembledInput inp = assemble(doc, reg, vocab, mcfg.duplicate_same_type);
    WindowPlan plan = plan_windows(inp, mcfg.window_context, mcfg.window_prompt, mcfg.max_len);
    dropped_gold += plan.dropped_gold;
    std::vector<int> idxs;
    for (const WindowPlan::Window& w : plan.windows) {
      for (const AssembledInput& pass : w.passes) {
        if (!pass_has_instances(pass)) continue;
        idxs.push_back(static_cast<int>(passes.size()));
        passes.push_back(pass);
      }
    }
    if (!idxs.empty()) doc_passes.push_back(std::move(idxs));
  }
  if (tcfg.steps > 0 && doc_passes.empty())
    throw DataError("train: corpus has no documents with events to train on");

  AdamState adam;
  for (const auto& [name, entry] : params.entries()) {
    adam.m.emplace(name, nn::Tensor(entry.value.shape()));
    adam.v.emplace(name, nn::Tensor(entry.value.shape()));
  }

  const int warmup_steps =
      static_cast<int>(std::llround(tcfg.warmup_ratio * static_cast<double>(tcfg.steps)));
  Rng order_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(doc_passes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  for (int step = 0; step < tcfg.steps; ++step) {
    params.zero_grads();
    double batch_loss = 0.0;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const std::vector<int>& dp = doc_passes[order[cursor++]];
      for (int idx : dp) {
        Tape t;
        PassForward fwd = run_pass(t, passes[idx], mcfg, params, nullptr, nullptr);
        Var loss = pass_loss(t, passes[idx], fwd, &dropped_gold);
        try {
          t.backward(loss);
        } catch (const NumericError&) {
          std::ostringstream os;
          os << "non-finite loss at step " << step;
          throw NumericError(os.str());
        }
        t.accumulate_param_grads(params, 1.0 / tcfg.batch_size);
        batch_loss += t.scalar(loss);
      }
    }
    batch_loss /= tcfg.batch_size;

    const double norm = params.grad_norm();
    if (norm > tcfg.max_grad_norm && norm > 0.0)
      params.scale_grads(tcfg.max_grad_norm / norm);

    double sched;
    if (warmup_steps > 0 && step < warmup_steps) {
      sched = static_cast<double>(step + 1) / warmup_steps;
    } else if (tcfg.steps == warmup_steps) {
      sched = 1.0;
    } else {
      sched = static_cast<double>(tcfg.steps - step) / (tcfg.steps - warmup_steps);
    }
    const double lr = tcfg.learning_rate * sched;
    adam_step(params, adam, lr);

    if (log) {
      json line = {{"step", step}, {"loss", batch_loss}, {"lr", lr}};
      *log << line.dump() << "\n";
    }
  }
  if (log && dropped_gold > 0) {
    json line = {{"warning", "surplus_gold_dropped"}, {"count", dropped_gold}};
    *log << line.dump() << "\n";
  }

  Checkpoint ck;
  ck.config = mcfg;
  ck.vocab_tokens = vocab.tokens();
  ck.vocab_max_events = vocab.max_events();
  ck.params = std::move(params);
  return ck;
}

PredictMode predict_mode_from(const std::string& name) {
  if (name == "multi") return PredictMode::Multi;
  if (name == "single_loop") return PredictMode::SingleLoop;
  throw DataError("unknown predict mode '" + name + "' (expected multi or single_loop)");
}

namespace {

std::vector<Prediction> predict_assembled(const Document& doc, const TemplateRegistry& reg,
                                          const Vocabulary& vocab, const Checkpoint& ck,
                                          ForwardStats* stats) {
  const ModelConfig& cfg = ck.config;
  AssembledInput inp = assemble(doc, reg, vocab, cfg.duplicate_same_type);
  WindowPlan plan = plan_windows(inp, cfg.window_context, cfg.window_prompt, cfg.max_len);
  std::vector<Prediction> preds;
  for (const AssembledInput* pass : plan.all_passes()) {
    if (!pass_has_instances(*pass)) continue;
    Tape t(false);
    PassForward fwd = run_pass(t, *pass, cfg, ck.params, nullptr, stats);
    for (const SlotInstance& inst : fwd.instances) {
      const SpanChoice choice =
          select_span(t.value(inst.dist.start), t.value(inst.dist.end), pass->context_lo,
                      pass->context_hi, cfg.span_threshold);
      Prediction p;
      p.doc_id = doc.doc_id;
      p.event_id = pass->event_ids[inst.event];
      p.role = inst.role;
      p.span = choice.empty() ? Span{0, 0} : pass->to_doc_span(choice.lo, choice.hi);
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

}  // namespace

std::vector<Prediction> predict(const Document& doc, const TemplateRegistry& reg,
                                const Checkpoint& ck, PredictMode mode, ForwardStats* stats) {
  for (const Event& ev : doc.events)
    if (!reg.has(ev.event_type))
      throw DataError("doc '" + doc.doc_id + "': unknown event type '" + ev.event_type + "'");
  Vocabulary vocab = ck.vocab();
  if (mode == PredictMode::Multi) return predict_assembled(doc, reg, vocab, ck, stats);
  std::vector<Prediction> preds;
  for (const Event& ev : doc.events) {
    Document sub;
    sub.doc_id = doc.doc_id;
    sub.tokens = doc.tokens;
    sub.events = {ev};
    auto sub_preds = predict_assembled(sub, reg, vocab, ck, stats);
    preds.insert(preds.end(), sub_preds.begin(), sub_preds.end());
  }
  return preds;
}

std::vector<Prediction> predict_corpus(const Corpus& corpus, const TemplateRegistry& reg,
                                       const Checkpoint& ck, PredictMode mode,
                                       ForwardStats* stats) {
  std::vector<Prediction> out;
  for (const Document& doc : corpus.docs) {
    auto preds = predict(doc, reg, ck, mode, stats);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

std::string predictions_to_jsonl(const std::vector<Prediction>& preds) {
  std::ostringstream out;
  for (const Prediction& p : preds) {
    if (p.span.empty()) continue;
    json j = {{"doc_id", p.doc_id},
              {"event_id", p.event_id},
              {"role", p.role},
              {"start", p.span.start},
              {"end", p.span.end}};
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<Prediction> parse_predictions_jsonl(const std::string& text) {
  std::vector<Prediction> preds;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      Prediction p;
      p.doc_id = j.at("doc_id").get<std::string>();
      p.event_id = j.at("event_id").get<std::string>();
      p.role = j.at("role").get<std::string>();
      p.span.start = j.at("start").get<int>();
      p.span.end = j.at("end").get<int>();
      preds.push_back(std::move(p));
    } catch (const json::exception& e) {
      std::ostringstream os;
      os << "predictions line " << line_no << ": " << e.what();
      throw DataError(os.str());
    }
  }
  return preds;
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_predictions_jsonl(buf.str());
}

nn::GradCheckReport model_grad_check(std::uint64_t seed, double eps, int samples_per_tensor) {
  GenConfig gen;
  gen.n_docs = 1;
  gen.doc_len_min = 16;
  gen.doc_len_max = 20;
  gen.event_count_weights = {0.0, 0.0, 1.0};  // exactly two events
  gen.args_min = 1;
  gen.args_max = 2;
  gen.arg_overlap_prob = 0.5;
  gen.max_arg_distance = 5;
  Corpus corpus = generate_synthetic(gen, seed);
  TemplateRegistry reg = registry_from(gen);

  ModelConfig cfg;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.enc_layers = 2;
  cfg.dec_layers = 1;
  cfg.gamma = 0.1;
  cfg.max_len = 128;
  cfg.window_context = 64;
  cfg.window_prompt = 48;

  Vocabulary vocab = Vocabulary::build(corpus, reg, 4);
  nn::ParamStore params = init_model_params(cfg, vocab.size(), seed + 1);
  AssembledInput inp = assemble(corpus.docs[0], reg, vocab, cfg.duplicate_same_type);

  nn::LossFn loss = [&inp, &cfg](nn::ParamStore& ps, bool with_grad) {
    Tape t(with_grad);
    PassForward fwd = run_pass(t, inp, cfg, ps, nullptr, nullptr);
    Var l = pass_loss(t, inp, fwd, nullptr);
    if (with_grad) {
      t.backward(l);
      t.accumulate_param_grads(ps);
    }
    return t.scalar(l);
  };
  return nn::grad_check(loss, params, eps, samples_per_tensor, seed + 2);
}

std::vector<BiasSummaryRow> export_bias_summary(const Corpus& corpus, const TemplateRegistry& reg,
                                                const Checkpoint& ck) {
  if (corpus.docs.empty()) throw DataError("bias summary: empty corpus");
  const ModelConfig& cfg = ck.config;
  Vocabulary vocab = ck.vocab();
  BiasStats totals(cfg.enc_layers);
  for (const Document& doc : corpus.docs) {
    AssembledInput inp = assemble(doc, reg, vocab, cfg.duplicate_same_type);
    WindowPlan plan = plan_windows(inp, cfg.window_context, cfg.window_prompt, cfg.max_len);
    for (const AssembledInput* pass : plan.all_passes()) {
      DependencyMatrix dep = build_dependency_matrix(*pass);
      Tape t(false);
      BiasStats stats;
      encode(t, pass->token_ids, &dep, cfg, ck.params, &stats);
      for (int layer = 0; layer < cfg.enc_layers; ++layer) {
        totals[layer].intra_sum += stats[layer].intra_sum;
        totals[layer].intra_cells += stats[layer].intra_cells;
        totals[layer].inter_sum += stats[layer].inter_sum;
        totals[layer].inter_cells += stats[layer].inter_cells;
      }
    }
  }
  std::vector<BiasSummaryRow> rows;
  for (int layer = 0; layer < cfg.enc_layers; ++layer) {
    const BiasLayerStats& s = totals[layer];
    rows.push_back({layer, "intra", s.intra_cells ? s.intra_sum / s.intra_cells : 0.0});
    rows.push_back({layer, "inter", s.inter_cells ? s.inter_sum / s.inter_cells : 0.0});
  }
  return rows;
}

std::string bias_summary_to_json(const std::vector<BiasSummaryRow>& rows) {
  json arr = json::array();
  for (const BiasSummaryRow& r : rows)
    arr.push_back({{"layer", r.layer}, {"category", r.category}, {"mean_bias", r.mean_bias}});
  return arr.dump(2);
}

}  // namespace argex

#include "prw/policy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "prw/generator.hpp"
#include "prw/metrics.hpp"
#include "prw/rng.hpp"

namespace prw {

namespace {

constexpr double kProbFloor = 1e-12;

double dot(const FeatVec& a, const FeatVec& b) {
  double s = 0.0;
  for (int i = 0; i < kFeatureDim; ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  return std::min(1.0 - kProbFloor, std::max(kProbFloor, p));
}

int num_actions(SectionKind s) { return s == SectionKind::Keywords ? 3 : 2; }

struct Categorical {
  std::array<double, 3> p{};
  int n = 2;
};

Categorical action_probs(const PolicyParams& params, SectionKind s, const FeatVec& feats) {
  Categorical dist;
  dist.n = num_actions(s);
  const auto& sec = params.sections[static_cast<int>(s)];
  std::array<double, 3> z{};
  double zmax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < dist.n; ++k) {
    z[k] = dot(sec.action[k], feats);
    zmax = std::max(zmax, z[k]);
  }
  double sum = 0.0;
  for (int k = 0; k < dist.n; ++k) {
    dist.p[k] = std::exp(z[k] - zmax);
    sum += dist.p[k];
  }
  for (int k = 0; k < dist.n; ++k)
    dist.p[k] = std::min(1.0 - kProbFloor, std::max(kProbFloor, dist.p[k] / sum));
  return dist;
}

double gate_prob(const PolicyParams& params, SectionKind s, const FeatVec& feats) {
  return sigmoid(dot(params.sections[static_cast<int>(s)].gate, feats));
}

double add_prob(const PolicyParams& params, const FeatVec& feats) {
  return sigmoid(dot(params.add_gate, feats));
}

const std::vector<Element>& section_of(const PromptDoc& p, SectionKind s) {
  switch (s) {
    case SectionKind::Summary: return p.summary;
    case SectionKind::Keywords: return p.keywords;
    case SectionKind::Style: return p.style;
  }
  return p.summary;
}

std::vector<Element>& section_of(PromptDoc& p, SectionKind s) {
  switch (s) {
    case SectionKind::Summary: return p.summary;
    case SectionKind::Keywords: return p.keywords;
    case SectionKind::Style: return p.style;
  }
  return p.summary;
}

// Tokens ranked by (frequency desc, first occurrence asc); word tokens only,
// stopwords excluded.
std::vector<std::string> ranked_word_tokens(const std::vector<std::string>& texts) {
  struct Info {
    double count = 0.0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Info> info;
  const auto& stop = builtin_stopwords();
  std::size_t pos = 0;
  for (const auto& text : texts) {
    for (const auto& t : tokenize(text)) {
      if (is_word_token(t) && !stop.count(t)) {
        auto [it, inserted] = info.try_emplace(t, Info{0.0, pos});
        it->second.count += 1.0;
      }
      ++pos;
    }
  }
  std::vector<std::pair<std::string, Info>> items(info.begin(), info.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [tok, i] : items) out.push_back(tok);
  return out;
}

}  // namespace

RewriteContext RewriteContext::from_prompt(const PromptDoc& prompt) {
  RewriteContext ctx;
  ctx.immediate_context = prompt.immediate_context;
  ctx.entries = prompt.ranked_entries;
  ctx.context_tf = term_freq(tokenize(prompt.immediate_context));
  for (const auto& entry : prompt.ranked_entries) {
    for (const auto& t : tokenize(entry)) {
      if (is_word_token(t)) ctx.entry_tf[t] += 1.0;
    }
  }
  for (const auto& [tok, f] : ctx.entry_tf) ctx.max_entry_tf = std::max(ctx.max_entry_tf, f);
  return ctx;
}

FeatVec featurize(const Element& elem, std::size_t index, std::size_t section_size,
                  const RewriteContext& ctx) {
  const TokenSeq toks = tokenize(elem.text);
  FeatVec f{};
  f[0] = 1.0;
  f[1] = cosine(term_freq(toks), ctx.context_tf);
  f[2] = section_size > 0 ? static_cast<double>(index) / static_cast<double>(section_size) : 0.0;
  f[3] = std::min(1.0, static_cast<double>(toks.size()) / 20.0);
  if (ctx.max_entry_tf > 0.0) {
    double sum = 0.0;
    int words = 0;
    for (const auto& t : toks) {
      if (!is_word_token(t)) continue;
      const auto it = ctx.entry_tf.find(t);
      sum += it == ctx.entry_tf.end() ? 0.0 : it->second / ctx.max_entry_tf;
      ++words;
    }
    f[4] = words > 0 ? sum / words : 0.0;
  }
  return f;
}

std::vector<std::string> candidate_pool(const PromptDoc& prompt, const RewriteContext& ctx,
                                        int pool_size) {
  std::unordered_set<std::string> existing;
  for (const auto& kw : prompt.keywords) existing.insert(to_lower(kw.text));

  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  auto take = [&](const std::vector<std::string>& ranked) {
    for (const auto& tok : ranked) {
      if (static_cast<int>(out.size()) >= pool_size) return;
      if (existing.count(tok) || !seen.insert(tok).second) continue;
      out.push_back(tok);
    }
  };
  take(ranked_word_tokens({ctx.immediate_context}));
  take(ranked_word_tokens(ctx.entries));
  return out;
}

PolicyParams PolicyParams::random_init(std::uint64_t seed, double scale) {
  PolicyParams p;
  Rng rng(mix64(seed, 0x9019ebabeULL));
  for (auto& sec : p.sections) {
    for (auto& row : sec.action)
      for (auto& w : row) w = rng.gauss() * scale;
    for (auto& w : sec.ordering) w = rng.gauss() * scale;
    for (auto& w : sec.gate) w = rng.gauss() * scale;
  }
  for (auto& w : p.add_gate) w = rng.gauss() * scale;
  return p;
}

std::pair<PromptDoc, Trajectory> policy_rewrite(const PromptDoc& prompt,
                                                const RewriteContext& ctx,
                                                const PolicyParams& params, RewriteMode mode,
                                                Rng* rng) {
  if (mode == RewriteMode::Sample && rng == nullptr)
    throw std::invalid_argument("Sample mode requires an rng");

  PromptDoc out = prompt;
  Trajectory traj;
  auto record = [&traj](DecisionType type, SectionKind s, const FeatVec& f, int action,
                        double lp) {
    traj.decisions.push_back({type, s, f, action, lp});
    traj.total_log_prob += lp;
  };

  for (const SectionKind skind :
       {SectionKind::Summary, SectionKind::Keywords, SectionKind::Style}) {
    const std::vector<Element>& elems = section_of(prompt, skind);
    std::vector<Element>& dest = section_of(out, skind);
    dest.clear();

    std::vector<FeatVec> feats(elems.size());
    for (std::size_t i = 0; i < elems.size(); ++i)
      feats[i] = featurize(elems[i], i, elems.size(), ctx);

    bool gate_dropped = false;
    if (!elems.empty()) {
      FeatVec mean{};
      for (const auto& f : feats)
        for (int k = 0; k < kFeatureDim; ++k) mean[k] += f[k];
      for (int k = 0; k < kFeatureDim; ++k) mean[k] /= static_cast<double>(elems.size());
      const double p = gate_prob(params, skind, mean);
      const int act = mode == RewriteMode::Sample ? (rng->real01() < p ? 1 : 0) : (p > 0.5 ? 1 : 0);
      record(DecisionType::SectionGate, skind, mean, act, std::log(act ? p : 1.0 - p));
      gate_dropped = act == 1;
    }

    if (!gate_dropped) {
      struct Kept {
        const Element* elem;
        FeatVec feats;
        bool duplicate;
      };
      std::vector<Kept> kept;
      for (std::size_t i = 0; i < elems.size(); ++i) {
        const Categorical dist = action_probs(params, skind, feats[i]);
        int act;
        if (mode == RewriteMode::Sample) {
          const double u = rng->real01();
          double cum = 0.0;
          act = dist.n - 1;
          for (int k = 0; k < dist.n; ++k) {
            cum += dist.p[k];
            if (u < cum) {
              act = k;
              break;
            }
          }
        } else {
          act = 1;  // ties resolve toward keep
          for (const int k : {0, 2}) {
            if (k < dist.n && dist.p[k] > dist.p[act]) act = k;
          }
        }
        record(DecisionType::ElementAction, skind, feats[i], act, std::log(dist.p[act]));
        if (act != 0) kept.push_back({&elems[i], feats[i], act == 2});
      }

      if (skind != SectionKind::Summary) {
        const auto& v = params.sections[static_cast<int>(skind)].ordering;
        std::stable_sort(kept.begin(), kept.end(), [&](const Kept& a, const Kept& b) {
          return dot(v, a.feats) > dot(v, b.feats);
        });
      }
      for (const auto& k : kept) {
        dest.push_back(*k.elem);
        if (k.duplicate) dest.push_back(*k.elem);
      }

      if (skind == SectionKind::Keywords) {
        const auto pool = candidate_pool(prompt, ctx);
        for (std::size_t j = 0; j < pool.size(); ++j) {
          const Element cand(ElementKind::Keyword, pool[j]);
          const FeatVec f = featurize(cand, j, pool.size(), ctx);
          const double p = add_prob(params, f);
          const int act =
              mode == RewriteMode::Sample ? (rng->real01() < p ? 1 : 0) : (p > 0.5 ? 1 : 0);
          record(DecisionType::AddCandidate, skind, f, act, std::log(act ? p : 1.0 - p));
          if (act) dest.push_back(cand);
        }
      }
    }
  }
  return {std::move(out), std::move(traj)};
}

double decision_log_prob(const PolicyParams& params, const Decision& d) {
  switch (d.type) {
    case DecisionType::SectionGate: {
      const double p = gate_prob(params, d.section, d.feats);
      return std::log(d.action ? p : 1.0 - p);
    }
    case DecisionType::AddCandidate: {
      const double p = add_prob(params, d.feats);
      return std::log(d.action ? p : 1.0 - p);
    }
    case DecisionType::ElementAction: {
      const Categorical dist = action_probs(params, d.section, d.feats);
      return std::log(dist.p[d.action]);
    }
  }
  return 0.0;
}

double decision_entropy(const PolicyParams& params, const Decision& d) {
  if (d.type == DecisionType::ElementAction) {
    const Categorical dist = action_probs(params, d.section, d.feats);
    double h = 0.0;
    for (int k = 0; k < dist.n; ++k) h -= dist.p[k] * std::log(dist.p[k]);
    return h;
  }
  const double p = d.type == DecisionType::SectionGate ? gate_prob(params, d.section, d.feats)
                                                       : add_prob(params, d.feats);
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

// ---------------------------------------------------------------------------
// PPO parameter vector: per section [action rows drop/keep/dup, gate], then
// the add gate. Ordering vectors are deterministic (no probability mass) and
// the baseline is updated by EMA, so neither belongs to the surrogate.
// ---------------------------------------------------------------------------

namespace {
constexpr int kSectionBlock = 4 * kFeatureDim;  // 3 action rows + gate
constexpr int kPpoDim = 3 * kSectionBlock + kFeatureDim;
}  // namespace

std::vector<double> flatten_ppo_params(const PolicyParams& params) {
  std::vector<double> flat(kPpoDim);
  int at = 0;
  for (const auto& sec : params.sections) {
    for (const auto& row : sec.action)
      for (double w : row) flat[at++] = w;
    for (double w : sec.gate) flat[at++] = w;
  }
  for (double w : params.add_gate) flat[at++] = w;
  return flat;
}

void unflatten_ppo_params(const std::vector<double>& flat, PolicyParams& params) {
  if (static_cast<int>(flat.size()) != kPpoDim)
    throw std::invalid_argument("ppo parameter vector has wrong size");
  int at = 0;
  for (auto& sec : params.sections) {
    for (auto& row : sec.action)
      for (double& w : row) w = flat[at++];
    for (double& w : sec.gate) w = flat[at++];
  }
  for (double& w : params.add_gate) w = flat[at++];
}

namespace {

struct DecisionRef {
  const Decision* d;
  double advantage;
};

std::vector<DecisionRef> collect_decisions(const std::vector<Trajectory>& trajectories,
                                           const std::vector<double>& advantages) {
  std::vector<DecisionRef> out;
  for (std::size_t t = 0; t < trajectories.size(); ++t)
    for (const auto& d : trajectories[t].decisions) out.push_back({&d, advantages[t]});
  return out;
}

int flat_offset(const Decision& d, int row) {
  if (d.type == DecisionType::AddCandidate) return 3 * kSectionBlock;
  const int base = static_cast<int>(d.section) * kSectionBlock;
  if (d.type == DecisionType::SectionGate) return base + 3 * kFeatureDim;
  return base + row * kFeatureDim;
}

}  // namespace

double ppo_surrogate_value(const PolicyParams& params, const std::vector<Trajectory>& trajectories,
                           const std::vector<double>& advantages, double clip_epsilon,
                           double entropy_coef) {
  const auto decisions = collect_decisions(trajectories, advantages);
  if (decisions.empty()) return 0.0;
  double sum = 0.0, ent = 0.0;
  for (const auto& ref : decisions) {
    const double lp_new = decision_log_prob(params, *ref.d);
    const double r = std::exp(lp_new - ref.d->log_prob);
    const double clipped = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    sum += std::min(r * ref.advantage, clipped * ref.advantage);
    ent += decision_entropy(params, *ref.d);
  }
  const double n = static_cast<double>(decisions.size());
  return sum / n + entropy_coef * ent / n;
}

std::vector<double> ppo_surrogate_gradient(const PolicyParams& params,
                                           const std::vector<Trajectory>& trajectories,
                                           const std::vector<double>& advantages,
                                           double clip_epsilon, double entropy_coef) {
  const auto decisions = collect_decisions(trajectories, advantages);
  std::vector<double> grad(kPpoDim, 0.0);
  if (decisions.empty()) return grad;
  const double inv_n = 1.0 / static_cast<double>(decisions.size());

  for (const auto& ref : decisions) {
    const Decision& d = *ref.d;
    const double lp_new = decision_log_prob(params, d);
    const double r = std::exp(lp_new - d.log_prob);
    const double clipped = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const double unclipped_term = r * ref.advantage;
    const double clipped_term = clipped * ref.advantage;
    // d(min)/d(log_prob): the unclipped branch owns the gradient at ties,
    // which is the exact derivative whenever r lies inside the clip box.
    const double g_lp = unclipped_term <= clipped_term ? unclipped_term * inv_n : 0.0;
    const double g_ent = entropy_coef * inv_n;

    if (d.type == DecisionType::ElementAction) {
      const Categorical dist = action_probs(params, d.section, d.feats);
      double h = 0.0;
      for (int k = 0; k < dist.n; ++k) h -= dist.p[k] * std::log(dist.p[k]);
      for (int k = 0; k < dist.n; ++k) {
        const double dlp_dzk = (k == d.action ? 1.0 : 0.0) - dist.p[k];
        const double dh_dzk = -dist.p[k] * (std::log(dist.p[k]) + h);
        const int off = flat_offset(d, k);
        for (int f = 0; f < kFeatureDim; ++f)
          grad[off + f] += (g_lp * dlp_dzk + g_ent * dh_dzk) * d.feats[f];
      }
    } else {
      const double p = d.type == DecisionType::SectionGate ? gate_prob(params, d.section, d.feats)
                                                           : add_prob(params, d.feats);
      const double dlp_dt = static_cast<double>(d.action) - p;
      const double dh_dt = p * (1.0 - p) * std::log((1.0 - p) / p);
      const int off = flat_offset(d, 0);
      for (int f = 0; f < kFeatureDim; ++f)
        grad[off + f] += (g_lp * dlp_dt + g_ent * dh_dt) * d.feats[f];
    }
  }
  return grad;
}

namespace {

void validate(const RlConfig& cfg) {
  if (cfg.clip_epsilon <= 0.0) throw std::invalid_argument("rl config: clip_epsilon must be > 0");
  if (cfg.learning_rate <= 0.0 || cfg.ppo_epochs <= 0 || cfg.batch_episodes <= 0 ||
      cfg.entropy_coef < 0.0 || cfg.baseline_decay <= 0.0 || cfg.baseline_decay > 1.0)
    throw std::invalid_argument("rl config: hyperparameters must be positive");
}

}  // namespace

PpoStats ppo_update(PolicyParams& params, const std::vector<Trajectory>& trajectories,
                    const std::vector<double>& rewards, const RlConfig& cfg) {
  validate(cfg);
  if (trajectories.empty() || trajectories.size() != rewards.size())
    throw std::invalid_argument("ppo_update needs a nonempty batch of (trajectory, reward)");

  PpoStats stats;
  const double n = static_cast<double>(rewards.size());
  double mean_reward = 0.0;
  for (double r : rewards) mean_reward += r;
  mean_reward /= n;
  stats.mean_reward = mean_reward;

  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = rewards[i] - params.baseline;
  double mean_a = 0.0;
  for (double a : adv) mean_a += a;
  mean_a /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean_a) * (a - mean_a);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  for (double& a : adv) a = (a - mean_a) / sd;

  const PolicyParams snapshot = params;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    const auto grad =
        ppo_surrogate_gradient(params, trajectories, adv, cfg.clip_epsilon, cfg.entropy_coef);
    bool finite = true;
    for (double g : grad)
      if (!std::isfinite(g)) finite = false;
    if (!finite) {
      params = snapshot;
      stats.aborted_non_finite = true;
      return stats;
    }
    auto flat = flatten_ppo_params(params);
    for (int i = 0; i < kPpoDim; ++i) flat[i] += cfg.learning_rate * grad[i];
    unflatten_ppo_params(flat, params);
  }

  stats.surrogate =
      ppo_surrogate_value(params, trajectories, adv, cfg.clip_epsilon, cfg.entropy_coef);
  double kl = 0.0, ent = 0.0;
  std::size_t count = 0;
  for (const auto& traj : trajectories) {
    for (const auto& d : traj.decisions) {
      kl += d.log_prob - decision_log_prob(params, d);
      ent += decision_entropy(params, d);
      ++count;
    }
  }
  if (count > 0) {
    stats.kl = kl / static_cast<double>(count);
    stats.entropy = ent / static_cast<double>(count);
  }
  params.baseline = cfg.baseline_decay * params.baseline + (1.0 - cfg.baseline_decay) * mean_reward;
  params.baseline_decay = cfg.baseline_decay;
  return stats;
}

// ---------------------------------------------------------------------------
// Supervised imitation
// ---------------------------------------------------------------------------

namespace {

struct SlData {
  struct GateEx {
    SectionKind section;
    FeatVec feats;
    double target;
  };
  struct ActionEx {
    SectionKind section;
    FeatVec feats;
    int target;
  };
  std::vector<GateEx> gates;
  std::vector<ActionEx> actions;
  std::vector<FeatVec> pair_deltas;  // feats(earlier-in-label) - feats(later)
};

SlData prepare_sl_data(const std::vector<SlExample>& examples) {
  SlData data;
  for (const auto& ex : examples) {
    const RewriteContext ctx = RewriteContext::from_prompt(ex.input);
    for (const SectionKind skind :
         {SectionKind::Summary, SectionKind::Keywords, SectionKind::Style}) {
      const auto& in_elems = section_of(ex.input, skind);
      if (in_elems.empty()) continue;
      const std::vector<Element>* label_elems = nullptr;
      switch (skind) {
        case SectionKind::Summary: label_elems = &ex.label.summary; break;
        case SectionKind::Keywords: label_elems = &ex.label.keywords; break;
        case SectionKind::Style: label_elems = &ex.label.style; break;
      }

      std::vector<FeatVec> feats(in_elems.size());
      FeatVec mean{};
      for (std::size_t i = 0; i < in_elems.size(); ++i) {
        feats[i] = featurize(in_elems[i], i, in_elems.size(), ctx);
        for (int k = 0; k < kFeatureDim; ++k) mean[k] += feats[i][k];
      }
      for (int k = 0; k < kFeatureDim; ++k) mean[k] /= static_cast<double>(in_elems.size());

      const bool gate_drop = label_elems->empty();
      data.gates.push_back({skind, mean, gate_drop ? 1.0 : 0.0});
      if (gate_drop) continue;

      std::unordered_map<std::string, int> label_count;
      std::unordered_map<std::string, std::size_t> label_pos;
      for (std::size_t i = 0; i < label_elems->size(); ++i) {
        const auto& text = (*label_elems)[i].text;
        ++label_count[text];
        label_pos.try_emplace(text, i);
      }
      const int max_action = num_actions(skind) - 1;
      for (std::size_t i = 0; i < in_elems.size(); ++i) {
        const auto it = label_count.find(in_elems[i].text);
        const int count = it == label_count.end() ? 0 : it->second;
        const int target = std::min(count > 1 ? 2 : count, max_action);
        data.actions.push_back({skind, feats[i], target});
      }

      if (skind == SectionKind::Keywords) {
        for (std::size_t i = 0; i < in_elems.size(); ++i) {
          for (std::size_t j = i + 1; j < in_elems.size(); ++j) {
            const auto& a = in_elems[i].text;
            const auto& b = in_elems[j].text;
            if (a == b) continue;
            const auto pa = label_pos.find(a);
            const auto pb = label_pos.find(b);
            if (pa == label_pos.end() || pb == label_pos.end()) continue;
            FeatVec delta;
            for (int k = 0; k < kFeatureDim; ++k) {
              delta[k] = pa->second < pb->second ? feats[i][k] - feats[j][k]
                                                 : feats[j][k] - feats[i][k];
            }
            data.pair_deltas.push_back(delta);
          }
        }
      }
    }
  }
  return data;
}

}  // namespace

SlFitResult sl_fit(PolicyParams& params, const std::vector<SlExample>& examples, int epochs,
                   double learning_rate) {
  if (examples.empty()) throw std::invalid_argument("sl_fit needs at least one example");
  const SlData data = prepare_sl_data(examples);
  SlFitResult result;

  const double gate_n = data.gates.empty() ? 1.0 : static_cast<double>(data.gates.size());
  const double act_n = data.actions.empty() ? 1.0 : static_cast<double>(data.actions.size());
  const double pair_n = data.pair_deltas.empty() ? 1.0 : static_cast<double>(data.pair_deltas.size());

  for (int epoch = 0; epoch <= epochs; ++epoch) {
    double loss = 0.0;
    std::array<SectionPolicyParams, 3> grad{};  // descent directions

    for (const auto& g : data.gates) {
      auto& sec = grad[static_cast<int>(g.section)];
      const double p = gate_prob(params, g.section, g.feats);
      loss += -(g.target * std::log(p) + (1.0 - g.target) * std::log(1.0 - p)) / gate_n;
      const double coeff = (p - g.target) / gate_n;
      for (int k = 0; k < kFeatureDim; ++k) sec.gate[k] += coeff * g.feats[k];
    }

    for (const auto& a : data.actions) {
      auto& sec = grad[static_cast<int>(a.section)];
      const Categorical dist = action_probs(params, a.section, a.feats);
      loss += -std::log(dist.p[a.target]) / act_n;
      for (int k = 0; k < dist.n; ++k) {
        const double coeff = (dist.p[k] - (k == a.target ? 1.0 : 0.0)) / act_n;
        for (int f = 0; f < kFeatureDim; ++f) sec.action[k][f] += coeff * a.feats[f];
      }
    }

    auto& kw = grad[static_cast<int>(SectionKind::Keywords)];
    const auto& v = params.sections[static_cast<int>(SectionKind::Keywords)].ordering;
    for (const auto& delta : data.pair_deltas) {
      const double margin = 1.0 - dot(v, delta);
      if (margin <= 0.0) continue;
      loss += margin / pair_n;
      for (int k = 0; k < kFeatureDim; ++k) kw.ordering[k] -= delta[k] / pair_n;
    }

    result.losses.push_back(loss);
    if (epoch == epochs) break;

    for (int s = 0; s < 3; ++s) {
      auto& sec = params.sections[s];
      const auto& gsec = grad[s];
      for (int r = 0; r < 3; ++r)
        for (int f = 0; f < kFeatureDim; ++f)
          sec.action[r][f] -= learning_rate * gsec.action[r][f];
      for (int f = 0; f < kFeatureDim; ++f) {
        sec.gate[f] -= learning_rate * gsec.gate[f];
        sec.ordering[f] -= learning_rate * gsec.ordering[f];
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// RL training loop
// ---------------------------------------------------------------------------

double evaluate_policy_reward(const PolicyParams& params, const std::vector<TaskPrompt>& tasks,
                              Generator& generator, const RunOptions& run) {
  if (tasks.empty()) return 0.0;
  std::vector<double> rewards(tasks.size(), 0.0);
  std::vector<char> ok(tasks.size(), 0);
  for_each_index(tasks.size(), run, [&](std::size_t i) {
    const auto& tp = tasks[i];
    const RewriteContext ctx = RewriteContext::from_prompt(tp.prompt);
    const auto [doc, traj] = policy_rewrite(tp.prompt, ctx, params, RewriteMode::Greedy);
    try {
      const auto rec = generator.generate(render(doc));
      rewards[i] =
          bleu(tokenize(rec.output), tokenize(tp.task.ground_truth), 4, BleuMode::Smoothed) / 100.0;
      ok[i] = 1;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  });
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (ok[i]) {
      sum += rewards[i];
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

std::string training_log_csv(const std::vector<BatchLog>& log) {
  std::string out = "batch,mean_reward,loss,kl,entropy,val_reward\n";
  char buf[224];
  for (const auto& row : log) {
    if (row.has_val) {
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.batch, row.mean_reward,
                    row.surrogate, row.kl, row.entropy, row.val_reward);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,\n", row.batch, row.mean_reward,
                    row.surrogate, row.kl, row.entropy);
    }
    out += buf;
  }
  return out;
}

PolicyParams rl_train(PolicyParams params, const std::vector<TaskPrompt>& train,
                      const std::vector<TaskPrompt>& validation, Generator& generator,
                      const RlConfig& cfg, std::vector<BatchLog>* log, const RunOptions& run) {
  validate(cfg);
  if (cfg.max_episodes > 0 && train.empty())
    throw std::invalid_argument("rl_train needs a nonempty train split");

  long long done = 0;
  int batch_idx = 0;
  std::atomic<bool> budget_stop{false};

  while (done < cfg.max_episodes && !budget_stop.load()) {
    const int n =
        static_cast<int>(std::min<long long>(cfg.batch_episodes, cfg.max_episodes - done));

    // Task draws happen serially so they are independent of thread count.
    Rng pick(mix64(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(batch_idx)));
    std::vector<std::size_t> chosen(n);
    for (int i = 0; i < n; ++i) chosen[i] = static_cast<std::size_t>(pick.below(train.size()));

    std::vector<Trajectory> trajs(n);
    std::vector<double> rewards(n, 0.0);
    std::vector<char> ok(n, 0);
    for_each_index(static_cast<std::size_t>(n), run, [&](std::size_t i) {
      const auto& tp = train[chosen[i]];
      Rng rng(mix64(cfg.seed, static_cast<std::uint64_t>(batch_idx) * 0x10001 + i, 0xe915));
      const RewriteContext ctx = RewriteContext::from_prompt(tp.prompt);
      auto [doc, traj] = policy_rewrite(tp.prompt, ctx, params, RewriteMode::Sample, &rng);
      try {
        const auto rec = generator.generate(render(doc));
        rewards[i] = bleu(tokenize(rec.output), tokenize(tp.task.ground_truth), 4,
                          BleuMode::Smoothed) /
                     100.0;
        trajs[i] = std::move(traj);
        ok[i] = 1;
      } catch (const BudgetExhausted&) {
        budget_stop.store(true);
      } catch (const std::exception&) {
        ok[i] = 0;  // episode skipped
      }
    });

    std::vector<Trajectory> batch_trajs;
    std::vector<double> batch_rewards;
    for (int i = 0; i < n; ++i) {
      if (ok[i]) {
        batch_trajs.push_back(std::move(trajs[i]));
        batch_rewards.push_back(rewards[i]);
      }
    }

    BatchLog row;
    row.batch = batch_idx;
    row.episodes = static_cast<int>(batch_trajs.size());
    row.skipped = n - row.episodes;
    if (!batch_trajs.empty()) {
      const PpoStats stats = ppo_update(params, batch_trajs, batch_rewards, cfg);
      row.mean_reward = stats.mean_reward;
      row.surrogate = stats.surrogate;
      row.kl = stats.kl;
      row.entropy = stats.entropy;
    }
    done += n;
    ++batch_idx;
    if (cfg.eval_every > 0 && batch_idx % cfg.eval_every == 0 && !validation.empty() &&
        !budget_stop.load()) {
      row.val_reward = evaluate_policy_reward(params, validation, generator, run);
      row.has_val = true;
    }
    if (log) log->push_back(row);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Rule rewriter: the learned edit patterns as an executable rule set
// ---------------------------------------------------------------------------

RuleSet default_ruleset(Domain domain) {
  RuleSet rules;
  rules.drop_summary = true;
  rules.filter_keywords = true;
  rules.reorder_keywords_by_appearance = true;
  rules.repeat_top_keywords = true;
  switch (domain) {
    case Domain::Email: rules.uniform_thorough_style = true; break;
    case Domain::Review: rules.drop_style = true; break;
    case Domain::Social: rules.keep_interest_style_phrases = true; break;
  }
  return rules;
}

PromptDoc rule_rewrite(const PromptDoc& prompt, const RewriteContext& ctx, const RuleSet& rules) {
  PromptDoc out = prompt;

  auto relevance = [&ctx](const Element& e) {
    return cosine(term_freq(tokenize(e.text)), ctx.context_tf);
  };

  if (rules.drop_summary) out.summary.clear();

  if (rules.filter_keywords) {
    std::vector<Element> kept;
    for (const auto& kw : out.keywords)
      if (relevance(kw) >= rules.filter_theta) kept.push_back(kw);
    out.keywords = std::move(kept);
  }

  if (rules.reorder_keywords_by_appearance) {
    // first-occurrence position in (immediate context ++ concatenated entries)
    std::unordered_map<std::string, std::size_t> first_pos;
    std::size_t pos = 0;
    auto scan = [&](const std::string& text) {
      for (const auto& t : tokenize(text)) {
        first_pos.try_emplace(t, pos);
        ++pos;
      }
    };
    scan(ctx.immediate_context);
    for (const auto& e : ctx.entries) scan(e);

    auto appearance = [&](const Element& kw) -> std::size_t {
      const TokenSeq toks = tokenize(kw.text);
      if (toks.empty()) return std::numeric_limits<std::size_t>::max();
      const auto it = first_pos.find(toks.front());
      return it == first_pos.end() ? std::numeric_limits<std::size_t>::max() : it->second;
    };
    std::stable_sort(out.keywords.begin(), out.keywords.end(),
                     [&](const Element& a, const Element& b) { return appearance(a) < appearance(b); });
  }

  if (rules.repeat_top_keywords && !out.keywords.empty()) {
    std::vector<std::size_t> idx(out.keywords.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return relevance(out.keywords[a]) > relevance(out.keywords[b]);
    });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(rules.repeat_m)));
    std::sort(idx.begin(), idx.end(), std::greater<>());  // insert from the back
    for (std::size_t i : idx)
      out.keywords.insert(out.keywords.begin() + static_cast<long>(i) + 1, out.keywords[i]);
  }

  if (rules.drop_style) out.style.clear();
  if (rules.uniform_thorough_style)
    out.style = {Element(ElementKind::StylePhrase, kUniformThoroughPhrase)};
  if (rules.keep_interest_style_phrases) {
    const auto& stop = builtin_stopwords();
    std::unordered_set<std::string> ctx_words;
    for (const auto& [tok, f] : ctx.context_tf)
      if (is_word_token(tok) && !stop.count(tok)) ctx_words.insert(tok);
    std::vector<Element> kept;
    for (const auto& phrase : out.style) {
      bool shares = false;
      for (const auto& t : tokenize(phrase.text)) {
        if (ctx_words.count(t)) {
          shares = true;
          break;
        }
      }
      if (shares) kept.push_back(phrase);
    }
    out.style = std::move(kept);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kSectionNames[3] = {"summary", "keywords", "style"};
}

void PolicyParams::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file: " + path);
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out << buf;
  };
  out << "prw-policy 1\n";
  out << "baseline";
  put(baseline);
  put(baseline_decay);
  out << '\n';
  for (int s = 0; s < 3; ++s) {
    const auto& sec = sections[s];
    out << "section " << kSectionNames[s] << " action";
    for (const auto& row : sec.action)
      for (double w : row) put(w);
    out << '\n';
    out << "section " << kSectionNames[s] << " ordering";
    for (double w : sec.ordering) put(w);
    out << '\n';
    out << "section " << kSectionNames[s] << " gate";
    for (double w : sec.gate) put(w);
    out << '\n';
  }
  out << "add_gate";
  for (double w : add_gate) put(w);
  out << '\n';
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "prw-policy" || version != 1)
    throw std::runtime_error("unsupported policy file format: " + path);

  PolicyParams p;
  std::string word;
  while (in >> word) {
    if (word == "baseline") {
      in >> p.baseline >> p.baseline_decay;
    } else if (word == "section") {
      std::string name, part;
      in >> name >> part;
      int s = -1;
      for (int i = 0; i < 3; ++i)
        if (name == kSectionNames[i]) s = i;
      if (s < 0) throw std::runtime_error("unknown section in policy file: " + name);
      auto& sec = p.sections[s];
      if (part == "action") {
        for (auto& row : sec.action)
          for (double& w : row) in >> w;
      } else if (part == "ordering") {
        for (double& w : sec.ordering) in >> w;
      } else if (part == "gate") {
        for (double& w : sec.gate) in >> w;
      } else {
        throw std::runtime_error("unknown policy section part: " + part);
      }
    } else if (word == "add_gate") {
      for (double& w : p.add_gate) in >> w;
    } else {
      throw std::runtime_error("unknown policy file token: " + word);
    }
  }
  if (in.bad()) throw std::runtime_error("I/O error reading policy file: " + path);
  return p;
}

}  // namespace prw

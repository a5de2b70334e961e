#include "ets/simenv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "ets/errors.hpp"
#include "ets/rng.hpp"

namespace ets {

namespace {

constexpr std::uint64_t kGoldStream = 0x601d;
constexpr std::uint64_t kRewardStream = 0x5c0e;
constexpr std::uint64_t kEmbedBase = 0xba5e;
constexpr std::uint64_t kEmbedVariant = 0x7a71;
constexpr std::string_view kPromptPrefix = "sim-problem:";

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::vector<double> unit_gaussian(std::uint64_t seed, int dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double sq = 0.0;
  for (double& x : v) {
    x = g(rng);
    sq += x * x;
  }
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("sim: " + m); };
  if (depth < 1) fail("depth must be >= 1");
  if (moves_per_depth < 1) fail("moves_per_depth must be >= 1");
  if (gold_moves < 1 || gold_moves > moves_per_depth) fail("gold_moves must be in [1, moves_per_depth]");
  if (!(p_good >= 0.0 && p_good <= 1.0)) fail("p_good must be a probability");
  if (!(reward_noise >= 0.0)) fail("reward_noise must be >= 0");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (!(embed_noise >= 0.0)) fail("embed_noise must be >= 0");
  if (tokens_per_step < 1) fail("tokens_per_step must be >= 1");
  if (variants_per_move < 1) fail("variants_per_move must be >= 1");
  if (prompt_tokens < 0) fail("prompt_tokens must be >= 0");
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"depth", c.depth},
       {"moves_per_depth", c.moves_per_depth},
       {"gold_moves", c.gold_moves},
       {"p_good", c.p_good},
       {"reward_noise", c.reward_noise},
       {"embed_dim", c.embed_dim},
       {"embed_noise", c.embed_noise},
       {"tokens_per_step", c.tokens_per_step},
       {"variants_per_move", c.variants_per_move},
       {"prompt_tokens", c.prompt_tokens},
       {"embed_seed", c.embed_seed}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  SimConfig d;
  c.depth = j.value("depth", d.depth);
  c.moves_per_depth = j.value("moves_per_depth", d.moves_per_depth);
  c.gold_moves = j.value("gold_moves", d.gold_moves);
  c.p_good = j.value("p_good", d.p_good);
  c.reward_noise = j.value("reward_noise", d.reward_noise);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.embed_noise = j.value("embed_noise", d.embed_noise);
  c.tokens_per_step = j.value("tokens_per_step", d.tokens_per_step);
  c.variants_per_move = j.value("variants_per_move", d.variants_per_move);
  c.prompt_tokens = j.value("prompt_tokens", d.prompt_tokens);
  c.embed_seed = j.value("embed_seed", d.embed_seed);
}

std::string SimProblem::prompt() const { return std::string(kPromptPrefix) + std::to_string(seed); }

SimEnv::SimEnv(SimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

SimProblem SimEnv::make_problem(std::uint64_t problem_seed) const {
  SimProblem p;
  p.seed = problem_seed;
  std::mt19937_64 rng(derive_seed({problem_seed, kGoldStream}));
  std::vector<int> moves(static_cast<std::size_t>(cfg_.moves_per_depth));
  for (int d = 0; d < cfg_.depth; ++d) {
    std::iota(moves.begin(), moves.end(), 0);
    // Partial Fisher-Yates: the first G entries become the gold set.
    for (int i = 0; i < cfg_.gold_moves; ++i) {
      std::uniform_int_distribution<int> pick(i, cfg_.moves_per_depth - 1);
      std::swap(moves[static_cast<std::size_t>(i)], moves[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> gold(moves.begin(), moves.begin() + cfg_.gold_moves);
    std::sort(gold.begin(), gold.end());
    p.gold.push_back(std::move(gold));
  }
  for (int d = 0; d < cfg_.depth; ++d) {
    if (d) p.canonical_answer += '-';
    p.canonical_answer += std::to_string(p.gold[static_cast<std::size_t>(d)].front());
  }
  return p;
}

SimProblem SimEnv::problem_at(std::uint64_t suite_seed, std::uint64_t index) const {
  return make_problem(derive_seed({suite_seed, index}));
}

SimProblem SimEnv::problem_from_prompt(std::string_view prompt) const {
  if (!prompt.starts_with(kPromptPrefix))
    throw InvalidArgument("not a sim problem prompt: '" + std::string(prompt) + "'");
  auto digits = prompt.substr(kPromptPrefix.size());
  std::uint64_t seed = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
  if (ec != std::errc() || p != digits.data() + digits.size())
    throw InvalidArgument("bad sim problem seed in '" + std::string(prompt) + "'");
  return make_problem(seed);
}

ParsedStep SimEnv::parse_step(std::string_view text) {
  // d{depth}:m{move}:v{variant}
  ParsedStep out;
  auto c1 = text.find(':');
  auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos || text.size() < 2 || text[0] != 'd' ||
      text.substr(c1 + 1, 1) != "m" || text.substr(c2 + 1, 1) != "v" ||
      !parse_int(text.substr(1, c1 - 1), out.depth) ||
      !parse_int(text.substr(c1 + 2, c2 - c1 - 2), out.move) ||
      !parse_int(text.substr(c2 + 2), out.variant))
    throw InvalidArgument("unparseable sim step '" + std::string(text) + "'");
  return out;
}

SimStep SimEnv::gen_step(const SimProblem& problem, std::span<const std::string> prefix,
                         std::mt19937_64& rng) const {
  const int depth = static_cast<int>(prefix.size());
  if (depth >= cfg_.depth)
    throw InvalidArgument("gen_step: prefix already at full depth " + std::to_string(depth));
  const auto& gold = problem.gold[static_cast<std::size_t>(depth)];

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  int move = 0;
  const bool all_gold = cfg_.gold_moves == cfg_.moves_per_depth;
  if (all_gold || coin(rng) < cfg_.p_good) {
    std::uniform_int_distribution<int> pick(0, cfg_.gold_moves - 1);
    move = gold[static_cast<std::size_t>(pick(rng))];
  } else {
    std::uniform_int_distribution<int> pick(0, cfg_.moves_per_depth - cfg_.gold_moves - 1);
    int k = pick(rng);
    // k-th non-gold move in ascending order.
    for (move = 0;; ++move) {
      if (std::binary_search(gold.begin(), gold.end(), move)) continue;
      if (k-- == 0) break;
    }
  }
  std::uniform_int_distribution<int> var(0, cfg_.variants_per_move - 1);
  SimStep s;
  s.move = move;
  s.variant = var(rng);
  s.text = "d" + std::to_string(depth) + ":m" + std::to_string(move) + ":v" + std::to_string(s.variant);
  s.token_count = cfg_.tokens_per_step;
  s.terminal = depth + 1 == cfg_.depth;
  return s;
}

double SimEnv::score(const SimProblem& problem, std::span<const std::string> trajectory) const {
  if (trajectory.empty()) throw InvalidArgument("score: empty trajectory");
  int good = 0;
  std::uint64_t h = fnv1a("");
  for (const auto& t : trajectory) {
    ParsedStep s = parse_step(t);
    if (s.depth >= 0 && s.depth < cfg_.depth) {
      const auto& gold = problem.gold[static_cast<std::size_t>(s.depth)];
      if (std::binary_search(gold.begin(), gold.end(), s.move)) ++good;
    }
    h = fnv1a(t, fnv1a("|", h));
  }
  double r = static_cast<double>(good) / static_cast<double>(trajectory.size());
  if (cfg_.reward_noise > 0.0) {
    std::mt19937_64 rng(derive_seed({problem.seed, kRewardStream, h}));
    std::normal_distribution<double> noise(0.0, cfg_.reward_noise);
    r += noise(rng);
  }
  return std::clamp(r, 0.0, 1.0);
}

std::vector<double> SimEnv::embed(std::string_view step_text) const {
  ParsedStep s = parse_step(step_text);
  auto d = static_cast<std::uint64_t>(s.depth);
  auto m = static_cast<std::uint64_t>(s.move);
  auto base = unit_gaussian(derive_seed({cfg_.embed_seed, kEmbedBase, d, m}), cfg_.embed_dim);
  if (cfg_.embed_noise > 0.0) {
    auto u = unit_gaussian(
        derive_seed({cfg_.embed_seed, kEmbedVariant, d, m, static_cast<std::uint64_t>(s.variant)}),
        cfg_.embed_dim);
    double sq = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      base[i] += cfg_.embed_noise * u[i];
      sq += base[i] * base[i];
    }
    const double n = std::sqrt(sq);
    for (double& x : base) x /= n;
  }
  return base;
}

std::string SimEnv::render_answer(std::span<const std::string> trajectory) {
  std::string out;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(parse_step(trajectory[i]).move);
  }
  return out;
}

bool SimEnv::check_answer(const SimProblem& problem, std::string_view answer) const {
  std::size_t d = 0;
  std::size_t pos = 0;
  while (pos <= answer.size()) {
    auto dash = answer.find('-', pos);
    auto tok = answer.substr(pos, dash == std::string_view::npos ? std::string_view::npos : dash - pos);
    int move = 0;
    if (d >= problem.gold.size() || !parse_int(tok, move)) return false;
    if (!std::binary_search(problem.gold[d].begin(), problem.gold[d].end(), move)) return false;
    ++d;
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  return d == problem.gold.size();
}

}  // namespace ets

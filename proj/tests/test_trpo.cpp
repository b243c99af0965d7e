// Trust-region update machinery: surrogate and its gradient, the composite
// multi-task direction, the KL trust-region contract, value fitting, and the
// training drivers.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include <mdrl/corpus.hpp>
#include <mdrl/domain.hpp>
#include <mdrl/dst.hpp>
#include <mdrl/metrics.hpp>
#include <mdrl/policy_net.hpp>
#include <mdrl/trpo.hpp>

#include "support/test_util.hpp"

using namespace mdrl;
using testutil::fd_grad;
using testutil::vec_rel_err;

namespace {

DstConfig tiny_dst_config() {
  DstConfig c;
  c.word_emb_width = 4;
  c.utt_hidden_width = 4;
  c.dialog_hidden_width = 4;
  c.shared_dense_width = 4;
  return c;
}

PolicyConfig tiny_policy_config() {
  PolicyConfig c;
  c.obs_width = 4;
  c.embedding_width = 5;
  c.value_hidden = 4;
  return c;
}

// Synthetic rollout batch: random observations, actions sampled from the
// policy itself so importance ratios start at exactly 1.
TaskBatch make_batch(const MultiDomainPolicy& pol, std::size_t pdi,
                     std::size_t n_traj, std::size_t turns, Rng& rng) {
  TaskBatch task;
  task.pdi = pdi;
  for (std::size_t e = 0; e < n_traj; ++e) {
    Trajectory tr;
    tr.policy_domain = pdi;
    for (std::size_t t = 0; t < turns; ++t) {
      Observation obs(pol.config().obs_width);
      for (auto& x : obs) x = rng.uniform_range(-1.0, 1.0);
      std::vector<double> probs = pol.action_probs(obs, pdi);
      std::size_t a = sample_action(probs, rng);
      tr.obs.push_back(std::move(obs));
      tr.actions.push_back(a);
      tr.rewards.push_back(t + 1 == turns ? rng.uniform_range(-1.0, 29.0)
                                          : -1.0);
      tr.old_log_probs.push_back(log_prob(probs, a));
      tr.old_probs.push_back(std::move(probs));
    }
    tr.check();
    task.trajs.push_back(std::move(tr));
  }
  compute_advantages(pol, task, 0.99, 0.97);
  return task;
}

}  // namespace

TEST_CASE("trpo config validation and search grids") {
  TrpoConfig c;
  REQUIRE_NOTHROW(c.validate());
  c.max_kl = 0.0;
  REQUIRE_THROWS_AS(c.validate(), config_error);
  c = TrpoConfig{};
  c.discount = 1.5;
  REQUIRE_THROWS_AS(c.validate(), config_error);
  c = TrpoConfig{};
  c.backtrack_coefficient = 1.0;
  REQUIRE_THROWS_AS(c.validate(), config_error);

  REQUIRE(max_kl_grid().size() == 9);
  REQUIRE(max_kl_grid().front() == 0.001);
  REQUIRE(max_kl_grid().back() == 0.5);
  REQUIRE(dialogs_per_iteration_grid().size() == 7);
  REQUIRE(dialogs_per_iteration_grid().front() == 10);
  REQUIRE(dialogs_per_iteration_grid().back() == 1000);
}

TEST_CASE("advantages are normalized per task batch") {
  std::vector<DomainSpec> ds = {builtin_domain("weather")};
  Rng rng(31);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(32);
  TaskBatch task = make_batch(pol, 0, 4, 5, brng);

  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
  for (const auto& ep : task.advantages)
    for (double a : ep) {
      mean += a;
      ++n;
    }
  mean /= double(n);
  for (const auto& ep : task.advantages)
    for (double a : ep) var += (a - mean) * (a - mean);
  var /= double(n);
  REQUIRE(std::fabs(mean) < 1e-10);
  REQUIRE(var == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(task.targets.size() == task.trajs.size());
}

TEST_CASE("surrogate equals mean advantage at the collection parameters") {
  std::vector<DomainSpec> ds = {builtin_domain("weather")};
  Rng rng(33);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(34);
  TaskBatch task = make_batch(pol, 0, 3, 6, brng);

  double L = surrogate_and_gradient(pol, pol.params().data(), task);
  double expect = 0.0;
  std::size_t W = 0;
  for (const auto& ep : task.advantages)
    for (double a : ep) {
      expect += a;
      ++W;
    }
  expect /= double(W);
  REQUIRE(L == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("surrogate gradient matches finite differences") {
  std::vector<DomainSpec> ds = {builtin_domain("weather"), micro_domain()};
  Rng rng(35);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(36);
  TaskBatch task = make_batch(pol, 0, 3, 4, brng);

  std::vector<double> g(pol.n_params(), 0.0);
  surrogate_and_gradient(pol, pol.params().data(), task, g.data());
  auto fd = fd_grad(
      [&](const std::vector<double>& p) {
        return surrogate_and_gradient(pol, p.data(), task);
      },
      pol.params().values());
  REQUIRE(vec_rel_err(g, fd) < 1e-4);

  // away from the collection point the ratios bite; check there too
  std::vector<double> moved = pol.params().values();
  Rng mrng(37);
  for (auto& x : moved) x += mrng.uniform_range(-0.05, 0.05);
  std::vector<double> g2(pol.n_params(), 0.0);
  surrogate_and_gradient(pol, moved.data(), task, g2.data());
  auto fd2 = fd_grad(
      [&](const std::vector<double>& p) {
        return surrogate_and_gradient(pol, p.data(), task);
      },
      moved);
  REQUIRE(vec_rel_err(g2, fd2) < 1e-4);
}

TEST_CASE("composite gradient: shared mean, own heads, untouched values") {
  std::vector<DomainSpec> ds = {builtin_domain("weather"), micro_domain()};
  Rng rng(38);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(39);
  std::vector<TaskBatch> tasks;
  tasks.push_back(make_batch(pol, 0, 3, 4, brng));
  tasks.push_back(make_batch(pol, 1, 3, 4, brng));

  std::size_t n = pol.n_params();
  std::vector<std::vector<double>> per_task;
  std::vector<double> Ls;
  for (const auto& t : tasks) {
    std::vector<double> g(n, 0.0);
    Ls.push_back(surrogate_and_gradient(pol, pol.params().data(), t,
                                        g.data()));
    per_task.push_back(std::move(g));
  }

  // a task's gradient lives only in the shared span and its own head
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    auto [ho, hl] = pol.head_span(1 - ti);
    for (std::size_t i = 0; i < hl; ++i)
      REQUIRE(per_task[ti][ho + i] == 0.0);
    for (std::size_t di = 0; di < 2; ++di) {
      auto [vo, vl] = pol.value_span(di);
      for (std::size_t i = 0; i < vl; ++i)
        REQUIRE(per_task[ti][vo + i] == 0.0);
    }
  }

  std::vector<double> comp;
  double L = composite_gradient(pol, pol.params().data(), tasks, comp);
  REQUIRE(L == Catch::Approx(0.5 * (Ls[0] + Ls[1])).margin(1e-12));

  auto [so, sl] = pol.shared_span();
  for (std::size_t i = 0; i < sl; ++i) {
    double mean = 0.5 * (per_task[0][so + i] + per_task[1][so + i]);
    REQUIRE(std::fabs(comp[so + i] - mean) <= 1e-10);
  }
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    auto [ho, hl] = pol.head_span(ti);
    for (std::size_t i = 0; i < hl; ++i)
      REQUIRE(comp[ho + i] == per_task[ti][ho + i]);
  }
}

TEST_CASE("measured kl is zero at the collection point and grows away") {
  std::vector<DomainSpec> ds = {builtin_domain("weather"), micro_domain()};
  Rng rng(40);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(41);
  std::vector<TaskBatch> tasks;
  tasks.push_back(make_batch(pol, 0, 2, 4, brng));
  tasks.push_back(make_batch(pol, 1, 2, 4, brng));

  REQUIRE(measured_kl(pol, pol.params().data(), tasks, false) == 0.0);
  REQUIRE(measured_kl(pol, pol.params().data(), tasks, true) == 0.0);

  std::vector<double> moved = pol.params().values();
  Rng mrng(42);
  for (auto& x : moved) x += mrng.uniform_range(-0.1, 0.1);
  double pooled = measured_kl(pol, moved.data(), tasks, false);
  double worst = measured_kl(pol, moved.data(), tasks, true);
  REQUIRE(pooled > 0.0);
  REQUIRE(worst >= pooled);  // max of per-task means dominates their mean
}

TEST_CASE("trpo_step with zero advantages is a bit-exact no-op") {
  std::vector<DomainSpec> ds = {builtin_domain("weather")};
  Rng rng(43);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(44);
  TaskBatch task = make_batch(pol, 0, 2, 4, brng);
  for (auto& ep : task.advantages)
    for (auto& a : ep) a = 0.0;

  std::uint64_t before = checksum(pol.params().values());
  StepDiag diag = trpo_step(pol, {task}, TrpoConfig{});
  REQUIRE_FALSE(diag.accepted);
  REQUIRE(diag.grad_norm < 1e-12);
  REQUIRE(checksum(pol.params().values()) == before);
}

TEST_CASE("trpo_step honors the trust region when it accepts") {
  std::vector<DomainSpec> ds = {builtin_domain("weather"), micro_domain()};
  Rng rng(45);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  TrpoConfig cfg;

  bool any_accepted = false;
  Rng brng(46);
  for (int round = 0; round < 5; ++round) {
    std::vector<TaskBatch> tasks;
    tasks.push_back(make_batch(pol, 0, 4, 5, brng));
    tasks.push_back(make_batch(pol, 1, 4, 5, brng));
    std::uint64_t before = checksum(pol.params().values());
    StepDiag diag = trpo_step(pol, tasks, cfg);
    if (diag.accepted) {
      any_accepted = true;
      REQUIRE(diag.mean_kl <= cfg.max_kl + 1e-12);
      REQUIRE(diag.surrogate_gain > 0.0);
      REQUIRE(checksum(pol.params().values()) != before);
      // re-measure against the stored distributions: same number
      REQUIRE(measured_kl(pol, pol.params().data(), tasks, false) ==
              Catch::Approx(diag.mean_kl).margin(1e-12));
    } else {
      REQUIRE(checksum(pol.params().values()) == before);
    }
  }
  REQUIRE(any_accepted);
}

TEST_CASE("value fitter regresses the baselines toward the targets") {
  std::vector<DomainSpec> ds = {builtin_domain("weather")};
  Rng rng(47);
  MultiDomainPolicy pol(ds, tiny_policy_config(), rng);
  Rng brng(48);
  TaskBatch task = make_batch(pol, 0, 6, 6, brng);

  auto mse = [&]() {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t ti = 0; ti < task.trajs.size(); ++ti)
      for (std::size_t t = 0; t < task.trajs[ti].turns(); ++t) {
        double err =
            pol.value(task.trajs[ti].obs[t], 0) - task.targets[ti][t];
        s += err * err;
        ++n;
      }
    return s / double(n);
  };

  double before = mse();
  ValueFitter fitter(1e-2);
  std::uint64_t shared_before = pol.params().checksum_of("shared.embed");
  std::uint64_t head_before = pol.params().checksum_of("head.weather");
  Rng frng(49);
  std::vector<TaskBatch> tasks = {std::move(task)};
  for (int e = 0; e < 10; ++e) fitter.fit(pol, tasks, 5, frng);
  task = std::move(tasks[0]);
  REQUIRE(mse() < before);
  // fitting the baseline must not move the policy
  REQUIRE(pol.params().checksum_of("shared.embed") == shared_before);
  REQUIRE(pol.params().checksum_of("head.weather") == head_before);
}

TEST_CASE("train_single writes the expected row grid") {
  std::vector<DomainSpec> ds = {micro_domain()};
  Rng drng(50);
  DstModel dst(ds, tiny_dst_config(), drng);

  Rng prng(51);
  MultiDomainPolicy pol(ds, tiny_policy_config(), prng);
  TrainSettings s;
  s.budget = 200;
  s.checkpoint_interval = 100;
  s.eval_dialogs = 20;
  s.trpo.dialogs_per_iteration = 50;
  TrainRun run = train_single(pol, dst, ds[0], s, 3);

  REQUIRE(run.run_id == "single_micro_s3");
  REQUIRE(run.mode == "single");
  REQUIRE(run.seed == 3);
  REQUIRE(run.rows.size() == 4);
  std::vector<std::size_t> seen;
  for (const auto& r : run.rows) {
    seen.push_back(r.dialogs_seen);
    REQUIRE(r.domain == "micro");
    REQUIRE(r.run_id == run.run_id);
    REQUIRE(r.success_rate >= 0.0);
    REQUIRE(r.success_rate <= 1.0);
    REQUIRE(r.avg_length > 0.0);
  }
  REQUIRE(seen == std::vector<std::size_t>{50, 100, 150, 200});
  REQUIRE_FALSE(run.rows[0].is_checkpoint);
  REQUIRE(run.rows[1].is_checkpoint);
  REQUIRE_FALSE(run.rows[2].is_checkpoint);
  REQUIRE(run.rows[3].is_checkpoint);

  // replaying the interval walk from the raw rows restores the same flags
  std::vector<IterationRow> copy = run.rows;
  for (auto& r : copy) r.is_checkpoint = false;
  mark_checkpoints(copy, s.checkpoint_interval, s.budget);
  for (std::size_t i = 0; i < copy.size(); ++i)
    REQUIRE(copy[i].is_checkpoint == run.rows[i].is_checkpoint);
}

TEST_CASE("train_single is reproducible for a fixed seed") {
  std::vector<DomainSpec> ds = {micro_domain()};
  Rng drng(52);
  DstModel dst(ds, tiny_dst_config(), drng);
  TrainSettings s;
  s.budget = 100;
  s.checkpoint_interval = 50;
  s.eval_dialogs = 10;
  s.trpo.dialogs_per_iteration = 50;

  auto run_once = [&]() {
    Rng prng(53);
    MultiDomainPolicy pol(ds, tiny_policy_config(), prng);
    TrainRun run = train_single(pol, dst, ds[0], s, 9);
    return std::pair<std::uint64_t, std::vector<IterationRow>>(
        checksum(pol.params().values()), run.rows);
  };
  auto [c1, rows1] = run_once();
  auto [c2, rows2] = run_once();
  REQUIRE(c1 == c2);
  REQUIRE(rows1.size() == rows2.size());
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    REQUIRE(rows1[i].success_rate == rows2[i].success_rate);
    REQUIRE(rows1[i].mean_kl == rows2[i].mean_kl);
    REQUIRE(rows1[i].surrogate_gain == rows2[i].surrogate_gain);
  }
}

TEST_CASE("train_mtl interleaves domains and tags the run") {
  std::vector<DomainSpec> ds = {micro_domain(), builtin_domain("weather")};
  Rng drng(54);
  DstModel dst(ds, tiny_dst_config(), drng);
  Rng prng(55);
  MultiDomainPolicy pol(ds, tiny_policy_config(), prng);
  TrainSettings s;
  s.budget = 100;
  s.checkpoint_interval = 50;
  s.eval_dialogs = 10;
  s.trpo.dialogs_per_iteration = 50;
  TrainRun run = train_mtl(pol, dst, ds, s, 2);
  REQUIRE(run.run_id == "mtl_mw_s2");
  REQUIRE(run.domains == std::vector<std::string>{"micro", "weather"});
  // two iterations, one row per domain each
  REQUIRE(run.rows.size() == 4);
  REQUIRE(run.rows[0].domain == "micro");
  REQUIRE(run.rows[1].domain == "weather");
  REQUIRE(run.rows[0].dialogs_seen == 50);
  REQUIRE(run.rows[2].dialogs_seen == 100);

  REQUIRE_THROWS_AS(train_mtl(pol, dst, {ds[0]}, s, 2), config_error);
}

TEST_CASE("train_tl pretrains on sources and fine-tunes a fresh head") {
  std::vector<DomainSpec> all = {micro_domain(), builtin_domain("weather"),
                                 builtin_domain("rest")};
  Rng drng(56);
  DstModel dst(all, tiny_dst_config(), drng);
  std::vector<DomainSpec> sources = {all[0], all[1]};
  TrainSettings s;
  s.budget = 60;
  s.checkpoint_interval = 30;
  s.eval_dialogs = 0;
  s.trpo.dialogs_per_iteration = 30;

  TlRun tl = train_tl(dst, sources, all[2], tiny_policy_config(), s, 5);
  REQUIRE(tl.source_dialogs == 120);
  REQUIRE(tl.target_run.mode == "tl");
  REQUIRE(tl.target_run.run_id == "tl_rest_s5");
  REQUIRE(tl.target_run.source_dialogs == 120);
  REQUIRE(tl.source_run.run_id == "tlsrc_rest_s5");
  REQUIRE(tl.policy.has_value());
  REQUIRE(tl.policy->has_domain("rest"));
  REQUIRE(tl.policy->domains().size() == 3);
  for (const auto& r : tl.target_run.rows) REQUIRE(r.domain == "rest");

  REQUIRE_THROWS_AS(
      train_tl(dst, sources, all[0], tiny_policy_config(), s, 5),
      config_error);
}

// Dialog state tracker: encoding determinism, the full BPTT gradient against
// finite differences, loss weighting, training behavior, and persistence.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include <mdrl/corpus.hpp>
#include <mdrl/domain.hpp>
#include <mdrl/dst.hpp>

#include "support/test_util.hpp"

using namespace mdrl;
using testutil::fd_grad;
using testutil::vec_rel_err;

namespace {

DstConfig tiny_config() {
  DstConfig c;
  c.word_emb_width = 4;
  c.utt_hidden_width = 4;
  c.dialog_hidden_width = 4;
  c.shared_dense_width = 4;
  c.epochs = 8;
  c.batch_size = 8;
  c.val_fraction = 0.25;
  return c;
}

std::vector<DomainSpec> tiny_domains() {
  return {micro_domain(), builtin_domain("weather")};
}

}  // namespace

TEST_CASE("dst layout carries every named component") {
  Rng rng(1);
  DstModel m(tiny_domains(), tiny_config(), rng);
  const ParamVector& pv = m.params();
  REQUIRE(pv.has("dst.word_emb"));
  REQUIRE(pv.has("dst.utt_fwd.W"));
  REQUIRE(pv.has("dst.utt_bwd.W"));
  REQUIRE(pv.has("dst.dialog.W"));
  REQUIRE(pv.has("dst.shared.W"));
  REQUIRE(pv.has("dst.head.micro.need.W"));
  REQUIRE(pv.has("dst.head.weather.city.b"));
  REQUIRE(m.obs_width() == 4);
  REQUIRE(m.vocab().size() > 2);
}

TEST_CASE("encode_turn is deterministic and carries dialog state") {
  Rng rng(2);
  DstModel m(tiny_domains(), tiny_config(), rng);
  std::vector<std::size_t> toks = {2, 3, 2};

  DialogState s1 = m.new_dialog_state();
  DialogState s2 = m.new_dialog_state();
  Observation o1 = m.encode_turn(toks, s1);
  Observation o2 = m.encode_turn(toks, s2);
  REQUIRE(o1 == o2);

  // a second identical turn must see a different recurrent state
  Observation o3 = m.encode_turn(toks, s1);
  REQUIRE(o3 != o1);

  // empty input is the reserved empty token, not an error
  DialogState s3 = m.new_dialog_state();
  Observation oe = m.encode_turn(std::vector<std::size_t>{}, s3);
  REQUIRE(oe.size() == 4);
}

TEST_CASE("predict_slots returns a full belief with argmax confidences") {
  Rng rng(3);
  DstModel m(tiny_domains(), tiny_config(), rng);
  DialogState st = m.new_dialog_state();
  Observation obs = m.encode_turn({2, 3}, st);
  BeliefState b = m.predict_slots(obs, "weather");
  REQUIRE(b.size() == 2);
  REQUIRE(b.count("city"));
  REQUIRE(b.count("day"));
  REQUIRE(b.at("city").value >= 0);
  REQUIRE(b.at("city").value < 11);
  REQUIRE(b.at("city").confidence > 0.0);
  REQUIRE(b.at("city").confidence <= 1.0);
  REQUIRE_THROWS_AS(m.predict_slots(obs, "bus"), config_error);
}

TEST_CASE("dst batch loss gradient matches finite differences end to end") {
  Rng rng(4);
  DstModel m(tiny_domains(), tiny_config(), rng);

  std::map<std::string, std::vector<LabeledDialog>> corpora;
  corpora["micro"] = generate_corpus(micro_domain(), 2, 0.2, Rng(41));
  corpora["weather"] =
      generate_corpus(builtin_domain("weather"), 2, 0.2, Rng(42));

  std::vector<EncodedDialog> encoded;
  for (const auto& [name, dialogs] : corpora)
    for (const auto& d : dialogs) encoded.push_back(encode_dialog(m, d));
  std::vector<const EncodedDialog*> batch;
  for (const auto& e : encoded) batch.push_back(&e);

  std::vector<double> grad(m.params().size(), 0.0);
  double loss = dst_batch_loss(m, m.params().data(), batch, grad.data());
  REQUIRE(std::isfinite(loss));
  REQUIRE(loss > 0.0);

  auto loss_at = [&](const std::vector<double>& p) {
    return dst_batch_loss(m, p.data(), batch);
  };
  auto fd = fd_grad(loss_at, m.params().values());
  REQUIRE(vec_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("dst batch loss is the mean cross-entropy for one domain") {
  Rng rng(5);
  DstModel m(tiny_domains(), tiny_config(), rng);
  auto dialogs = generate_corpus(builtin_domain("weather"), 1, 0.0, Rng(51));
  EncodedDialog e = encode_dialog(m, dialogs[0]);
  double loss = dst_batch_loss(m, m.params().data(), {&e});

  // manual: mean over (turns x slots) of -log p(label)
  const double* p = m.params().data();
  DialogState st = m.new_dialog_state();
  double manual = 0.0;
  std::size_t terms = 0;
  for (const auto& turn : e.turns) {
    Observation obs = m.encode_turn(turn, st, p);
    std::vector<double> sh(4), pre(4);
    dense_forward(p, m.shared_dense(), obs.data(), sh.data(), pre.data());
    for (std::size_t s = 0; s < 2; ++s) {
      const DenseView& head = m.head(1, s);  // weather is domain index 1
      std::vector<double> logits(head.out_width), probs(head.out_width);
      dense_forward(p, head, sh.data(), logits.data());
      manual += cross_entropy_from_logits(logits.data(), logits.size(),
                                          std::size_t(e.labels[s]),
                                          probs.data());
      ++terms;
    }
  }
  manual /= double(terms);
  REQUIRE(loss == Catch::Approx(manual).epsilon(1e-12));
}

TEST_CASE("dst training reduces loss and tracks the micro corpus") {
  Rng init(6);
  std::vector<DomainSpec> ds = {micro_domain()};
  DstConfig cfg = tiny_config();
  cfg.epochs = 40;
  cfg.learning_rate = 3e-3;
  DstModel m(ds, cfg, init);

  std::map<std::string, std::vector<LabeledDialog>> corpora;
  corpora["micro"] = generate_corpus(micro_domain(), 40, 0.0, Rng(61));

  Rng train_rng(62);
  DstTrainInfo info = train_dst(m, corpora, train_rng);
  REQUIRE(info.epoch_loss.size() == cfg.epochs);
  REQUIRE(info.epoch_loss.back() < info.epoch_loss.front());
  REQUIRE(info.best_epoch < cfg.epochs);

  auto test_set = generate_corpus(micro_domain(), 30, 0.0, Rng(63));
  double acc = joint_accuracy(m, test_set, "micro");
  REQUIRE(acc >= 0.9);  // one binary slot on a clean channel
}

TEST_CASE("dst checkpoints round-trip and reject other architectures") {
  Rng rng(7);
  DstModel m(tiny_domains(), tiny_config(), rng);
  std::string path = "dst_roundtrip.ckpt";
  m.save(path);

  Rng rng2(8);
  DstModel m2(tiny_domains(), tiny_config(), rng2);
  REQUIRE(m2.params().values() != m.params().values());
  m2.load_values(path);
  REQUIRE(m2.params().values() == m.params().values());

  DialogState s1 = m.new_dialog_state(), s2 = m2.new_dialog_state();
  REQUIRE(m.encode_turn({2, 3}, s1) == m2.encode_turn({2, 3}, s2));

  DstConfig other = tiny_config();
  other.dialog_hidden_width = 5;
  Rng rng3(9);
  DstModel m3(tiny_domains(), other, rng3);
  REQUIRE_THROWS_AS(m3.load_values(path), config_error);
  std::filesystem::remove(path);
}

// ===== test_verify.cpp =====

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>

#include "durnn/verify.hpp"
#include "json.hpp"

using namespace durnn;
using nlohmann::json;

namespace {

VerifyOptions small_options() {
  VerifyOptions opt;
  opt.instances = 6;
  opt.neurons = 4;
  opt.inputs = 2;
  opt.steps = 5;
  opt.batch = 2;
  opt.fd_instances = 2;
  opt.bound_inits = 3;
  opt.bound_spans = {12};
  opt.seed = 3;
  return opt;
}

}  // namespace

TEST_CASE("clean sweep passes and reports every check") {
  VerifyOutcome out = run_verify(small_options());
  CHECK(out.pass);
  CHECK(out.text.find("[FAIL]") == std::string::npos);
  CHECK(out.text.find("[PASS] closed_form:durnn") != std::string::npos);
  CHECK(out.text.find("[PASS] closed_form:rnn_relu") != std::string::npos);
  CHECK(out.text.find("[PASS] frozen_fd") != std::string::npos);
  CHECK(out.text.find("[PASS] bounds:L12") != std::string::npos);

  const json root = json::parse(out.json);
  CHECK(root.at("pass").get<bool>());
  CHECK(root.at("checks").size() == 7);  // 5 variants + fd + one bound span

  // The finite-difference check touches every trainable tensor by name.
  std::set<std::string> fd_params;
  for (const json& c : root.at("checks"))
    if (c.at("name") == "frozen_fd")
      for (const json& p : c.at("params")) fd_params.insert(p.at("param").get<std::string>());
  const std::set<std::string> expected = {
      "layer1.w_in", "layer1.w_rec", "layer1.b_short", "layer1.w_ss",
      "layer1.w_ls", "layer1.b_s",   "layer1.b_thre",  "layer1.w_s",
      "layer1.u",    "layer1.b_long", "head.w_out",    "head.b_out"};
  CHECK(fd_params == expected);
}

TEST_CASE("deterministic for a fixed seed") {
  VerifyOptions opt = small_options();
  opt.fd_instances = 1;
  opt.bound_inits = 1;
  VerifyOutcome a = run_verify(opt);
  VerifyOutcome b = run_verify(opt);
  CHECK(a.json == b.json);
  CHECK(a.text == b.text);
}

TEST_CASE("a corrupted gradient is caught and named") {
  VerifyOptions opt = small_options();
  opt.fd_instances = 0;
  opt.bound_inits = 0;
  opt.corrupt = "w_rec";
  VerifyOutcome out = run_verify(opt);
  CHECK_FALSE(out.pass);
  CHECK(out.text.find("[FAIL] closed_form:durnn") != std::string::npos);
  // The long-only variant has no short sublayer, so nothing there to poison.
  CHECK(out.text.find("[PASS] closed_form:indrnn") != std::string::npos);

  const json root = json::parse(out.json);
  CHECK_FALSE(root.at("pass").get<bool>());
  bool w_rec_flagged = false;
  for (const json& c : root.at("checks"))
    if (c.at("name") == "closed_form:durnn")
      for (const json& p : c.at("params"))
        if (p.at("param") == "layer1.w_rec") {
          w_rec_flagged = true;
          CHECK_FALSE(p.at("pass").get<bool>());
          CHECK(p.at("max_abs_err").get<double>() > 0.5);
        }
  CHECK(w_rec_flagged);
}

TEST_CASE("corrupting the selection threshold trips only selection variants") {
  VerifyOptions opt = small_options();
  opt.fd_instances = 0;
  opt.bound_inits = 0;
  opt.corrupt = "b_thre";
  VerifyOutcome out = run_verify(opt);
  CHECK_FALSE(out.pass);
  CHECK(out.text.find("[FAIL] closed_form:durnn") != std::string::npos);
  CHECK(out.text.find("[FAIL] closed_form:ind_plus_selection") != std::string::npos);
  CHECK(out.text.find("[PASS] closed_form:no_selection") != std::string::npos);
  CHECK(out.text.find("[PASS] closed_form:rnn_relu") != std::string::npos);
  CHECK(out.text.find("[PASS] closed_form:indrnn") != std::string::npos);
}

TEST_CASE("a corrupt target that never materializes is itself a failure") {
  VerifyOptions opt = small_options();
  opt.fd_instances = 0;
  opt.bound_inits = 0;
  opt.corrupt = "layer9.w_in";
  VerifyOutcome out = run_verify(opt);
  CHECK_FALSE(out.pass);
  CHECK(out.text.find("[FAIL] fault_injection") != std::string::npos);
  CHECK(out.text.find("never materialized") != std::string::npos);
}

TEST_CASE("option validation mirrors the oracle caps") {
  VerifyOptions opt = small_options();
  opt.neurons = 9;
  CHECK_THROWS_AS(run_verify(opt), std::invalid_argument);
  opt = small_options();
  opt.steps = 11;
  CHECK_THROWS_AS(run_verify(opt), std::invalid_argument);
  opt = small_options();
  opt.instances = 0;
  CHECK_THROWS_AS(run_verify(opt), std::invalid_argument);
  opt = small_options();
  opt.bound_spans = {1};
  CHECK_THROWS_AS(run_verify(opt), std::invalid_argument);
}

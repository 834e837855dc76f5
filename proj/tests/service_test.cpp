// Copyright 2026 The affsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <thread>

#include "affsim/service.hpp"

namespace affsim {
namespace {

using nlohmann::json;

std::string submit_ok(RunService& svc, const json& body) {
  const Response r = svc.submit(body.dump());
  EXPECT_EQ(r.status, 200) << r.body;
  return json::parse(r.body).at("id").get<std::string>();
}

TEST(Service, ListsBuiltinScenariosWithRanges) {
  RunService svc;
  const json j = json::parse(svc.list_scenarios().body);
  ASSERT_EQ(j["scenarios"].size(), 2u);
  EXPECT_EQ(j["scenarios"][0]["id"], "pedestrian_crossing");
  const json& truck = j["scenarios"][1];
  EXPECT_EQ(truck["id"], "truck_turn_crash");
  bool found = false;
  for (const auto& p : truck["params"]) {
    if (p["name"] == "truck_speed") {
      found = true;
      EXPECT_EQ(p["min"], 5.0);
      EXPECT_EQ(p["max"], 25.0);
    }
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(truck["viewpoints"], json::array({"ego_driver", "truck_driver"}));
}

TEST(Service, HappyPathFinishes) {
  RunService svc;
  const auto id = submit_ok(svc, {{"scenario_id", "pedestrian_crossing"}});
  svc.wait_idle();
  const json st = json::parse(svc.status(id).body);
  EXPECT_EQ(st["status"], "done");
  EXPECT_EQ(st["params"]["aeb"], 1.0);
  EXPECT_FALSE(st["analysis"]["collision"].get<bool>());
  EXPECT_EQ(st["trace_summary"]["samples"], 33);
}

TEST(Service, ErrorsMapToStatusCodes) {
  RunService svc;
  EXPECT_EQ(svc.status("nonexistent").status, 404);
  EXPECT_EQ(svc.trace("nonexistent").status, 404);
  EXPECT_EQ(svc.submit("{oops").status, 400);
  EXPECT_EQ(svc.submit(R"({"scenario_id": "nope"})").status, 400);
  EXPECT_EQ(svc.submit(R"({"scenario_id": "truck_turn_crash", "params": {"warp": 2}})").status, 400);
  const Response r = svc.submit(R"({"scenario_id": "truck_turn_crash", "params": {"truck_speed": 40}})");
  EXPECT_EQ(r.status, 400);
  EXPECT_NE(r.body.find("above max 25"), std::string::npos) << r.body;
  const Response g = svc.submit(R"({"scenario_id": "truck_turn_crash", "grid": ["truck_speed=1:25:1"]})");
  EXPECT_EQ(g.status, 400);
  EXPECT_NE(g.body.find("below min 5"), std::string::npos) << g.body;
}

TEST(Service, IdenticalRequestsGiveIdenticalReports) {
  RunService svc;
  const json body = {{"scenario_id", "truck_turn_crash"}, {"params", {{"ego_speed", 27}}}, {"grid", {"truck_speed=6:12:3"}}};
  const auto a = submit_ok(svc, body);
  const auto b = submit_ok(svc, body);
  EXPECT_NE(a, b);
  svc.wait_idle();
  const json ja = json::parse(svc.status(a).body), jb = json::parse(svc.status(b).body);
  EXPECT_EQ(ja["status"], "done");
  EXPECT_EQ(ja["report"].dump(), jb["report"].dump());
  EXPECT_EQ(ja["report"]["rows"].size(), 3u);
  // Sweeps keep no per-step artifacts.
  EXPECT_EQ(svc.trace(a).status, 404);
}

TEST(Service, StatusNeverRegresses) {
  RunService svc;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(submit_ok(svc, {{"scenario_id", "truck_turn_crash"}}));
  const std::map<std::string, int> rank = {{"pending", 0}, {"running", 1}, {"done", 2}, {"failed", 2}};
  std::map<std::string, int> last;
  for (;;) {
    bool all_done = true;
    for (const auto& id : ids) {
      const int r = rank.at(json::parse(svc.status(id).body)["status"].get<std::string>());
      EXPECT_GE(r, last[id]);
      last[id] = r;
      all_done = all_done && r == 2;
    }
    if (all_done) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  // Reading again changes nothing.
  EXPECT_EQ(svc.status(ids[0]).body, svc.status(ids[0]).body);
  EXPECT_EQ(svc.trace(ids[0]).body, svc.trace(ids[0]).body);
}

TEST(Service, TraceFramesAndVisibility) {
  RunService svc;
  const auto id = submit_ok(svc, {{"scenario_id", "truck_turn_crash"}, {"params", {{"truck_speed", 12}}}});
  svc.wait_idle();
  const Response tr = svc.trace(id);
  ASSERT_EQ(tr.status, 200);
  EXPECT_EQ(tr.content_type, "application/x-ndjson");
  std::istringstream lines(tr.body);
  std::string line;
  int k = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(json::parse(line)["t"].get<double>(), 0.25 * k);
    ++k;
  }
  EXPECT_EQ(k, 41);
  const Response f = svc.frame(id, "7");
  ASSERT_EQ(f.status, 200);
  EXPECT_EQ(f.body.substr(0, 2), "P6");
  EXPECT_EQ(decode_ppm(f.body).rgb.size(), 280u * 210u * 3u);
  EXPECT_EQ(svc.frame(id, "41").status, 404);
  EXPECT_EQ(svc.frame(id, "x").status, 400);
  const json v = json::parse(svc.visibility(id).body);
  EXPECT_EQ(v["times"].size(), 41u);
  ASSERT_EQ(v["viewpoints"].size(), 2u);
  EXPECT_EQ(v["viewpoints"][1]["name"], "truck_driver");
  EXPECT_EQ(v["viewpoints"][1]["fractions"].size(), 41u);
}

TEST(Service, UnfinishedRunIsConflict) {
  RunService svc;
  // Queue enough work that the last run is still pending when asked.
  for (int i = 0; i < 4; ++i) submit_ok(svc, {{"scenario_id", "truck_turn_crash"}, {"grid", {"truck_speed=5:25:1"}}});
  const auto id = submit_ok(svc, {{"scenario_id", "truck_turn_crash"}});
  const Response r = svc.trace(id);
  if (json::parse(svc.status(id).body)["status"] != "done") { EXPECT_EQ(r.status, 409); }
  svc.wait_idle();
  EXPECT_EQ(svc.trace(id).status, 200);
}

TEST(Http, EndToEndOverLoopback) {
  RunService svc;
  HttpServer server(svc);
  const int port = server.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto list = cli.Get("/scenarios");
  ASSERT_TRUE(list);
  EXPECT_EQ(list->status, 200);
  EXPECT_EQ(json::parse(list->body)["scenarios"].size(), 2u);

  EXPECT_EQ(cli.Get("/runs/nonexistent")->status, 404);
  EXPECT_EQ(cli.Post("/runs", R"({"scenario_id": 3})", "application/json")->status, 400);

  auto post = cli.Post("/runs", R"({"scenario_id": "pedestrian_crossing", "params": {"aeb": 0}})", "application/json");
  ASSERT_TRUE(post);
  ASSERT_EQ(post->status, 200);
  const std::string id = json::parse(post->body)["id"];
  std::string status;
  for (int i = 0; i < 2000 && status != "done"; ++i) {
    status = json::parse(cli.Get("/runs/" + id)->body)["status"];
    if (status != "done") std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ASSERT_EQ(status, "done");
  const json st = json::parse(cli.Get("/runs/" + id)->body);
  EXPECT_TRUE(st["analysis"]["collision"].get<bool>());

  auto trace = cli.Get("/runs/" + id + "/trace");
  EXPECT_EQ(trace->status, 200);
  EXPECT_EQ(std::count(trace->body.begin(), trace->body.end(), '\n'), 33);
  auto frame = cli.Get("/runs/" + id + "/frames/0");
  EXPECT_EQ(frame->status, 200);
  EXPECT_EQ(frame->get_header_value("Content-Type"), "image/x-portable-pixmap");
  auto vis = cli.Get("/runs/" + id + "/visibility");
  EXPECT_EQ(vis->status, 200);
  EXPECT_EQ(json::parse(vis->body)["viewpoints"][0]["name"], "ego_driver");

  server.stop();
  t.join();
}

}  // namespace
}  // namespace affsim

#include "doctest.h"

#include <sstream>
#include <stdexcept>
#include <string>

#include "dfgl/common.hpp"
#include "dfgl/netmodel.hpp"
#include "dfgl/topology.hpp"

using namespace dfgl;

TEST_CASE("bandwidth sampling is deterministic and in range") {
  auto a = net::sample_bandwidth(16, 5, 20, 42, 3);
  auto b = net::sample_bandwidth(16, 5, 20, 42, 3);
  CHECK(a.b_in == b.b_in);
  CHECK(a.b_out == b.b_out);

  auto c = net::sample_bandwidth(16, 5, 20, 42, 4);
  CHECK(a.b_in != c.b_in);
  auto d = net::sample_bandwidth(16, 5, 20, 43, 3);
  CHECK(a.b_in != d.b_in);

  for (double v : a.b_in) CHECK((v >= 5.0 && v <= 20.0));
  for (double v : a.b_out) CHECK((v >= 5.0 && v <= 20.0));

  auto fixed = net::sample_bandwidth(4, 7, 7, 1, 1);
  for (double v : fixed.b_in) CHECK(v == 7.0);
  for (double v : fixed.b_out) CHECK(v == 7.0);

  CHECK_THROWS_AS(net::sample_bandwidth(0, 5, 20, 1, 1), ConfigError);
  CHECK_THROWS_AS(net::sample_bandwidth(4, 0, 20, 1, 1), ConfigError);
  CHECK_THROWS_AS(net::sample_bandwidth(4, 5, 4, 1, 1), ConfigError);
}

TEST_CASE("bandwidth sample mean sits near the uniform midpoint") {
  auto bw = net::sample_bandwidth(5000, 5, 20, 1, 1);
  double mean = 0.0;
  for (double v : bw.b_in) mean += v;
  for (double v : bw.b_out) mean += v;
  mean /= 10000.0;
  CHECK(mean > 12.2);
  CHECK(mean < 12.8);
}

TEST_CASE("link capacity splits endpoint capacity over neighbors") {
  // out-degree 2 at the sender, in-degree 3 at the receiver
  auto t = Topology::from_edges(5, {{0, 1}, {0, 2}, {1, 3}, {1, 4}});
  net::BandwidthState bw;
  bw.b_out = {10, 1, 1, 1, 1};
  bw.b_in = {1, 12, 1, 1, 1};
  CHECK(net::link_bandwidth(0, 1, t, bw) == 4.0);  // min(10/2, 12/3)

  auto single = Topology::from_edges(2, {{0, 1}});
  net::BandwidthState bw2{{8, 8}, {8, 8}};
  CHECK(net::link_bandwidth(0, 1, single, bw2) == 8.0);
  CHECK(net::link_bandwidth(1, 0, single, bw2) == 8.0);

  CHECK_THROWS_AS(net::link_bandwidth(0, 3, t, bw), std::invalid_argument);
  CHECK_THROWS_AS(net::link_bandwidth(0, 0, t, bw), std::invalid_argument);
}

TEST_CASE("denser neighborhoods dilute per-link capacity") {
  net::BandwidthState bw{{12, 12, 12}, {12, 12, 12}};
  auto sparse = Topology::from_edges(3, {{0, 1}});
  CHECK(net::link_bandwidth(0, 1, sparse, bw) == 12.0);
  auto dense = Topology::from_edges(3, {{0, 1}, {0, 2}});
  CHECK(net::link_bandwidth(0, 1, dense, bw) == 6.0);
}

TEST_CASE("communication time on a single 4 Mbps link") {
  auto t = Topology::from_edges(2, {{0, 1}});
  net::BandwidthState bw{{4, 4}, {4, 4}};
  kern::Matrix nominal(2, 2);
  nominal.at(0, 1) = 80e6;  // bits at full sampling
  auto ct = net::comm_time(0, t, 0.5, nominal, 8e6, bw);
  CHECK(!ct.isolated);
  CHECK(ct.seconds == 12.0);  // 0.5 * 80Mb / 4Mbps + 8Mb / 4Mbps
}

TEST_CASE("communication time takes the slowest neighbor on each phase") {
  // worker 0 talks to 1 (fast link, big payload) and 2 (slow link, small payload)
  auto t = Topology::from_edges(3, {{0, 1}, {0, 2}});
  net::BandwidthState bw{{1, 16, 4}, {16, 1, 1}};  // b_in, b_out
  kern::Matrix nominal(3, 3);
  nominal.at(0, 1) = 64e6;
  nominal.at(0, 2) = 4e6;
  // links: 0->1 min(16/2, 16/1)=8, 0->2 min(16/2, 4/1)=4
  // embed: max(1.0*64/8, 1.0*4/4) = 8; model: max(8/8, 8/4) = 2
  auto ct = net::comm_time(0, t, 1.0, nominal, 8e6, bw);
  CHECK(ct.seconds == 10.0);
}

TEST_CASE("isolated workers spend no communication time") {
  auto t = Topology::from_edges(3, {{0, 1}});
  net::BandwidthState bw{{4, 4, 4}, {4, 4, 4}};
  kern::Matrix nominal(3, 3);
  auto ct = net::comm_time(2, t, 0.5, nominal, 8e6, bw);
  CHECK(ct.isolated);
  CHECK(ct.seconds == 0.0);
}

TEST_CASE("compute time scales rows by speed") {
  CHECK(net::compute_time(2000, 1e-5, 2.0) == doctest::Approx(0.01));
  CHECK(net::compute_time(0, 1e-5, 1.0) == 0.0);
  CHECK_THROWS_AS(net::compute_time(10, 1e-5, 0.0), std::invalid_argument);
}

TEST_CASE("round time is the straggler total") {
  auto rep = net::assemble_timing({1.0, 2.0}, {3.0, 1.0});
  CHECK(rep.t_total == std::vector<double>{4.0, 3.0});
  CHECK(rep.t_round == 4.0);
  CHECK_THROWS_AS(net::assemble_timing({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("traffic ledger accumulates per link and round") {
  net::TrafficLedger led;
  led.add_embed(1, 0, 1, 100);
  led.add_embed(1, 0, 1, 20);
  led.add_model(1, 0, 1, 50);
  led.add_model(1, 1, 0, 50);
  led.add_embed(2, 0, 1, 7);
  led.add_embed(1, 0, 2, 0);  // zero-size transfers leave no row

  CHECK(led.total_embed_bits() == 127);
  CHECK(led.total_model_bits() == 100);
  CHECK(led.round_embed_bits(1) == 120);
  CHECK(led.round_model_bits(1) == 100);
  CHECK(led.round_embed_bits(2) == 7);
  CHECK(led.round_embed_bits(3) == 0);
  CHECK(led.link_embed_bits(1, 0, 1) == 120);
  CHECK(led.link_embed_bits(1, 0, 2) == 0);

  std::ostringstream os;
  led.export_csv(os);
  CHECK(os.str() ==
        "round,src,dst,embed_bits,model_bits\n"
        "1,0,1,120,50\n"
        "1,1,0,0,50\n"
        "2,0,1,7,0\n");

  CHECK_THROWS_AS(led.add_embed(1, 0, 1, -1), std::invalid_argument);
  CHECK_THROWS_AS(led.add_model(1, 0, 1, -5), std::invalid_argument);
}
